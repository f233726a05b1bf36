#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "doctest.h"
#include "ssa/errors.hpp"
#include "ssa/gradients.hpp"
#include "ssa/losses.hpp"
#include "ssa/numerics.hpp"

using namespace ssa;

namespace {

bool exactly_equal(const DenseMatrix& a, const DenseMatrix& b) {
    const auto lhs = a.values();
    const auto rhs = b.values();
    return a.same_shape(b) &&
           std::equal(lhs.begin(), lhs.end(), rhs.begin(), rhs.end());
}

} // namespace

TEST_CASE("finite_difference_grad is exact on quadratics") {
    const auto f = [](std::span<const double> x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            acc += static_cast<double>(i + 1) * x[i] * x[i];
        return acc;
    };
    const std::vector<double> x0{0.3, -1.2, 2.0, 0.0};
    const auto grad = finite_difference_grad(f, x0, 1e-5);
    REQUIRE(grad.size() == 4);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(grad[i] ==
              doctest::Approx(2.0 * static_cast<double>(i + 1) * x0[i])
                  .epsilon(1e-8));
}

TEST_CASE("run_forward produces a consistent tape") {
    const RandomInstance inst = make_random_instance(11, 3, 20, 6, 4, 3);
    const LossConstants constants;
    const ForwardTape tape =
        run_forward(inst.items, inst.labels, inst.params, 2, constants);

    CHECK(tape.bags.size() == 3);
    CHECK(tape.head_logits.rows() == 3);
    CHECK(tape.head_logits.cols() == 3);
    CHECK(tape.total_patches == 60);

    SUBCASE("loss fields satisfy the combination identity") {
        const double recomputed =
            tape.loss.task +
            constants.lambda * (tape.loss.switch_loss +
                                constants.entropy_coeff * tape.loss.entropy +
                                tape.loss.z);
        CHECK(tape.loss.total == doctest::Approx(recomputed).epsilon(1e-15));
    }
    SUBCASE("task term matches an independent cross-entropy") {
        const double task =
            task_loss_cross_entropy(tape.head_logits, inst.labels);
        CHECK(tape.loss.task == doctest::Approx(task).epsilon(1e-15));
    }
    SUBCASE("merged statistics are normalized") {
        const auto& m = tape.merged;
        CHECK(m.n_patches == 60);
        CHECK(std::accumulate(m.load.begin(), m.load.end(), 0.0) ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::accumulate(m.mean_prob.begin(), m.mean_prob.end(), 0.0) ==
              doctest::Approx(1.0).epsilon(1e-12));
        std::size_t count_sum = 0;
        for (auto c : m.counts) count_sum += c;
        CHECK(count_sum == 60 * 2);
    }
    SUBCASE("forward is deterministic") {
        const ForwardTape again =
            run_forward(inst.items, inst.labels, inst.params, 2, constants);
        CHECK(again.loss.total == tape.loss.total);
        CHECK(exactly_equal(again.head_logits, tape.head_logits));
    }
    SUBCASE("label out of range is rejected") {
        auto labels = inst.labels;
        labels[0] = 7;
        CHECK_THROWS_AS(
            run_forward(inst.items, labels, inst.params, 2, constants),
            InvalidInputError);
    }
}

TEST_CASE("backward reproduces the closed-form head bias gradient") {
    const RandomInstance inst = make_random_instance(17, 4, 16, 5, 4, 3);
    const LossConstants constants;
    const ForwardTape tape =
        run_forward(inst.items, inst.labels, inst.params, 2, constants);
    const GradientSet grads = backward(tape, constants);

    const DenseMatrix probs = softmax_rows(tape.head_logits);
    const std::size_t batch = tape.bags.size();
    for (std::size_t c = 0; c < 3; ++c) {
        double expected = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double onehot = inst.labels[b] == c ? 1.0 : 0.0;
            expected += (probs(b, c) - onehot) / static_cast<double>(batch);
        }
        CHECK(grads.head_bias[c] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("grad_check mechanics") {
    const RandomInstance inst = make_random_instance(19, 1, 8, 4, 2, 2);
    const GradientSet zeros = GradientSet::zeros_like(inst.params);
    const std::size_t n = zeros.flatten().size();

    SUBCASE("size mismatch throws") {
        std::vector<double> numeric(n + 1, 0.0);
        CHECK_THROWS_AS(grad_check(zeros, numeric, 1e-4, 1e-6), ShapeError);
        std::vector<bool> flags(n - 1, false);
        std::vector<double> ok(n, 0.0);
        CHECK_THROWS_AS(grad_check(zeros, ok, 1e-4, 1e-6, flags), ShapeError);
    }
    SUBCASE("absolute floor controls tiny mismatches") {
        std::vector<double> numeric(n, 0.0);
        numeric[0] = 5e-7;
        const CheckReport r = grad_check(zeros, numeric, 1e-4, 1e-6);
        CHECK(r.max_rel_error == doctest::Approx(0.5).epsilon(1e-12));
        CHECK_FALSE(r.passed);
        CHECK(r.worst.front().index == 0);
        CHECK(grad_check(zeros, numeric, 0.6, 1e-6).passed);
    }
    SUBCASE("flagged coordinates are excluded from the verdict") {
        std::vector<double> numeric(n, 0.0);
        numeric[3] = 1.0;
        std::vector<bool> flags(n, false);
        flags[3] = true;
        const CheckReport r = grad_check(zeros, numeric, 1e-4, 1e-6, flags);
        CHECK(r.passed);
        CHECK(r.flagged == 1);
        CHECK(r.max_rel_error == 0.0);
        CHECK(r.total == n);
    }
    SUBCASE("worst list is capped at five entries") {
        std::vector<double> numeric(n, 1.0);
        const CheckReport r = grad_check(zeros, numeric, 1e-4, 1e-6);
        CHECK(r.worst.size() == 5);
        CHECK(r.worst.front().rel_error == doctest::Approx(1.0));
    }
}

TEST_CASE("pipeline gradients match central differences") {
    SUBCASE("full selection leaves nothing flagged") {
        const RandomInstance inst = make_random_instance(23, 2, 12, 4, 2, 2);
        PipelineCheckConfig config;
        config.top_k = 2;
        const CheckReport r = check_pipeline_gradients(
            inst.items, inst.labels, inst.params, config);
        CHECK(r.passed);
        CHECK(r.flagged == 0);
        CHECK(r.max_rel_error < 1e-5);
    }
    SUBCASE("sparse selection, shared refinement") {
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            const RandomInstance inst =
                make_random_instance(seed, 2, 24, 6, 4, 3);
            const CheckReport r = check_pipeline_gradients(
                inst.items, inst.labels, inst.params);
            INFO("seed ", seed, " max_rel_error ", r.max_rel_error);
            CHECK(r.passed);
            CHECK(r.max_rel_error < 1e-4);
            CHECK(r.flagged * 20 < r.total);
        }
    }
    SUBCASE("per-slot refinement") {
        const RandomInstance inst =
            make_random_instance(5, 2, 16, 5, 4, 3, false, false);
        REQUIRE(inst.params.slot_mlps.size() == 4);
        const CheckReport r =
            check_pipeline_gradients(inst.items, inst.labels, inst.params);
        CHECK(r.passed);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("residual refinement") {
        const RandomInstance inst =
            make_random_instance(7, 2, 16, 5, 4, 3, true, true);
        REQUIRE(inst.params.residual);
        const CheckReport r =
            check_pipeline_gradients(inst.items, inst.labels, inst.params);
        CHECK(r.passed);
        CHECK(r.max_rel_error < 1e-4);
    }
    SUBCASE("loose lambda-free configuration") {
        const RandomInstance inst = make_random_instance(29, 2, 16, 5, 4, 2);
        PipelineCheckConfig config;
        config.constants.lambda = 0.0;
        const CheckReport r = check_pipeline_gradients(
            inst.items, inst.labels, inst.params, config);
        CHECK(r.passed);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("random instances are reproducible") {
    const RandomInstance a = make_random_instance(41, 2, 10, 4, 3, 2);
    const RandomInstance b = make_random_instance(41, 2, 10, 4, 3, 2);
    CHECK(a.params.flatten() == b.params.flatten());
    CHECK(a.labels == b.labels);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t i = 0; i < a.items.size(); ++i)
        CHECK(exactly_equal(a.items[i], b.items[i]));

    const RandomInstance c = make_random_instance(42, 2, 10, 4, 3, 2);
    CHECK(a.params.flatten() != c.params.flatten());
}
