#include <cmath>
#include <vector>

#include "doctest.h"
#include "ssa/errors.hpp"
#include "ssa/losses.hpp"
#include "ssa/numerics.hpp"
#include "ssa/rng.hpp"
#include "ssa/router.hpp"

using namespace ssa;

namespace {

RoutingStats stats_from(std::vector<double> mean_prob,
                        std::vector<double> load) {
    RoutingStats s;
    s.mean_prob = std::move(mean_prob);
    s.load = std::move(load);
    s.counts.assign(s.load.size(), 0);
    s.n_patches = 1;
    s.top_k = 2;
    return s;
}

std::vector<double> random_distribution(RngState& rng, std::size_t k) {
    std::vector<double> p(k);
    double sum = 0.0;
    for (double& v : p) {
        v = rng.next_unit() + 1e-6;
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

} // namespace

TEST_CASE("switch_loss analytic cases") {
    CHECK(switch_loss(stats_from({0.25, 0.25, 0.25, 0.25},
                                 {0.5, 0.5, 0.0, 0.0})) == 1.0);
    CHECK(switch_loss(stats_from({1.0, 0.0, 0.0, 0.0},
                                 {0.5, 0.5, 0.0, 0.0})) == 2.0);
    CHECK(switch_loss(stats_from({0.5, 0.5}, {0.5, 0.5})) == 1.0);

    SUBCASE("uniform mean probability gives 1 for any load split") {
        RngState rng(61);
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t k = 2 + rng.next_below(9);
            const auto f = random_distribution(rng, k);
            std::vector<double> p(k, 1.0 / static_cast<double>(k));
            CHECK(std::abs(switch_loss(stats_from(p, f)) - 1.0) < 1e-12);
        }
    }
    SUBCASE("P = f lower bound via Cauchy-Schwarz") {
        RngState rng(62);
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t k = 2 + rng.next_below(15);
            const auto f = random_distribution(rng, k);
            CHECK(switch_loss(stats_from(f, f)) >= 1.0 - 1e-12);
        }
    }
}

TEST_CASE("entropy_loss spans its range") {
    SUBCASE("uniform is the minimum") {
        for (std::size_t k : {2u, 4u, 8u, 32u}) {
            std::vector<double> p(k, 1.0 / static_cast<double>(k));
            std::vector<double> f(k, 1.0 / static_cast<double>(k));
            CHECK(std::abs(entropy_loss(stats_from(p, f))) < 1e-6);
        }
    }
    SUBCASE("one-hot approaches 1") {
        CHECK(entropy_loss(stats_from({1.0, 0.0, 0.0, 0.0},
                                      {0.5, 0.5, 0.0, 0.0})) ==
              doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("binary oracle value") {
        const double expected = 1.0 -
                                (-(0.25 * std::log(0.25 + 1e-8) +
                                   0.75 * std::log(0.75 + 1e-8))) /
                                    std::log(2.0);
        const double got =
            entropy_loss(stats_from({0.25, 0.75}, {0.5, 0.5}));
        CHECK(got == doctest::Approx(expected).epsilon(1e-9));
        CHECK(got == doctest::Approx(0.188722).epsilon(1e-5));
    }
    SUBCASE("single slot is rejected") {
        CHECK_THROWS_AS(entropy_loss(stats_from({1.0}, {1.0})),
                        InvalidConfigError);
    }
    SUBCASE("permutation invariance") {
        const double a =
            entropy_loss(stats_from({0.1, 0.2, 0.3, 0.4}, {0.25, 0.25, 0.25, 0.25}));
        const double b =
            entropy_loss(stats_from({0.4, 0.1, 0.3, 0.2}, {0.25, 0.25, 0.25, 0.25}));
        CHECK(a == doctest::Approx(b).epsilon(1e-15));
    }
}

TEST_CASE("z_loss penalizes log-sum-exp magnitude") {
    SUBCASE("zero logits, four slots") {
        const DenseMatrix logits(3, 4);
        const double expected = 1e-4 * std::log(4.0) * std::log(4.0);
        CHECK(std::abs(z_loss(logits) - expected) < 1e-10);
        CHECK(z_loss(logits) ==
              doctest::Approx(1.92181e-4).epsilon(1e-4));
    }
    SUBCASE("single column is exact") {
        const DenseMatrix logits(5, 1);
        CHECK(z_loss(logits) == 0.0);
    }
    SUBCASE("large logits stay finite via the shift identity") {
        const DenseMatrix logits = DenseMatrix::from_rows({{1000, 1000}});
        const double lse = 1000.0 + std::log(2.0);
        CHECK(z_loss(logits) ==
              doctest::Approx(1e-4 * lse * lse).epsilon(1e-12));
    }
    SUBCASE("shift law") {
        RngState rng(63);
        DenseMatrix logits(6, 3);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                logits(i, j) = rng.next_unit() * 4.0 - 2.0;
        const double c = 1.7;
        DenseMatrix shifted = logits;
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 3; ++j) shifted(i, j) += c;

        const auto lse = log_sum_exp_rows(logits);
        double expected = 0.0;
        for (double v : lse) expected += (v + c) * (v + c);
        expected *= 1e-4 / 6.0;
        CHECK(z_loss(shifted) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("task cross-entropy oracle values") {
    CHECK(task_loss_cross_entropy(DenseMatrix::from_rows({{0, 0}}), {0}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(task_loss_cross_entropy(
              DenseMatrix::from_rows({{20, -20}}), {0})) < 1e-8);
    CHECK(task_loss_cross_entropy(DenseMatrix::from_rows({{1, 0}}), {1}) ==
          doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-12));
    CHECK(task_loss_cross_entropy(DenseMatrix::from_rows({{1, 0}}), {1}) ==
          doctest::Approx(1.3132617).epsilon(1e-7));

    CHECK_THROWS_AS(
        task_loss_cross_entropy(DenseMatrix::from_rows({{0, 0}}), {2}),
        InvalidInputError);
    CHECK_THROWS_AS(
        task_loss_cross_entropy(DenseMatrix::from_rows({{0, 0}}), {0, 1}),
        ShapeError);
}

TEST_CASE("total_loss combines with the exact weighting") {
    SUBCASE("composed analytic case") {
        const RoutingStats uniform =
            stats_from({0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25});
        const DenseMatrix logits(8, 4);
        const LossBreakdown out =
            total_loss(0.0, uniform, logits, LossConstants{});
        const double expected =
            0.1 * (1.0 + 0.5 * out.entropy + 1.9218120556728056e-4);
        CHECK(out.total == doctest::Approx(expected).epsilon(1e-12));
        CHECK(out.total == doctest::Approx(0.10002).epsilon(1e-3));
        CHECK(std::abs(out.total - 0.1 * (1.0 + 1.9218120556728056e-4)) <
              1e-7);
    }
    SUBCASE("lambda zero disables the auxiliary suite") {
        LossConstants constants;
        constants.lambda = 0.0;
        const RoutingStats s = stats_from({0.9, 0.1}, {0.5, 0.5});
        const LossBreakdown out =
            total_loss(0.37, s, DenseMatrix(2, 2), constants);
        CHECK(out.total == 0.37);
    }
    SUBCASE("breakdown identity holds for random inputs") {
        RngState rng(64);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t k = 2 + rng.next_below(7);
            const auto p = random_distribution(rng, k);
            const auto f = random_distribution(rng, k);
            DenseMatrix logits(3, k);
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < k; ++j)
                    logits(i, j) = rng.next_unit() * 8.0 - 4.0;
            LossConstants constants;
            constants.lambda = rng.next_unit();
            const double task = rng.next_unit() * 3.0;
            const LossBreakdown out = total_loss(task, stats_from(p, f),
                                                 logits, constants);
            const double recomputed =
                out.task + out.lambda * (out.switch_loss +
                                         constants.entropy_coeff * out.entropy +
                                         out.z);
            CHECK(std::abs(out.total - recomputed) < 1e-12);
            CHECK(out.switch_loss >= 0.0);
            CHECK(out.z >= 0.0);
        }
    }
    SUBCASE("default constants") {
        const LossConstants c;
        CHECK(c.delta == 1e-9);
        CHECK(c.epsilon == 1e-8);
        CHECK(c.alpha == 1e-4);
        CHECK(c.lambda == 0.1);
        CHECK(c.entropy_coeff == 0.5);
    }
}
