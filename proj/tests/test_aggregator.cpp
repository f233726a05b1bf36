#include <cmath>
#include <vector>

#include "doctest.h"
#include "ssa/aggregator.hpp"
#include "ssa/compressor.hpp"
#include "ssa/errors.hpp"
#include "ssa/model.hpp"
#include "ssa/numerics.hpp"
#include "ssa/rng.hpp"
#include "ssa/router.hpp"

using namespace ssa;

namespace {

RoutingTable manual_table(std::size_t n_patches, std::size_t n_slots,
                          std::vector<std::uint32_t> slots,
                          std::vector<double> weights) {
    RoutingTable t;
    t.n_patches = n_patches;
    t.n_slots = n_slots;
    t.top_k = slots.size() / n_patches;
    t.slots = std::move(slots);
    t.weights = std::move(weights);
    return t;
}

SlotMlpParams identity_mlp(std::size_t dim) {
    SlotMlpParams mlp;
    mlp.activation = Activation::identity;
    mlp.w1 = DenseMatrix(dim, dim);
    mlp.w2 = DenseMatrix(dim, dim);
    for (std::size_t d = 0; d < dim; ++d) {
        mlp.w1(d, d) = 1.0;
        mlp.w2(d, d) = 1.0;
    }
    mlp.b1.assign(dim, 0.0);
    mlp.b2.assign(dim, 0.0);
    return mlp;
}

double gelu_oracle(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

} // namespace

TEST_CASE("aggregate_slots pools with the guarded denominator") {
    SUBCASE("single full-weight assignment is identity up to delta") {
        const DenseMatrix x = DenseMatrix::from_rows({{2.0, -3.0, 0.5}});
        const RoutingTable t = manual_table(1, 2, {0, 1}, {1.0, 0.0});
        const DenseMatrix c = aggregate_slots(x, t);
        for (std::size_t d = 0; d < 3; ++d)
            CHECK(std::abs(c(0, d) - x(0, d)) < 1e-8);
    }
    SUBCASE("unassigned slot is exactly zero") {
        const DenseMatrix x = DenseMatrix::from_rows({{5.0, 5.0}});
        const RoutingTable t = manual_table(1, 3, {0, 1}, {0.7, 0.3});
        const DenseMatrix c = aggregate_slots(x, t);
        CHECK(c(2, 0) == 0.0);
        CHECK(c(2, 1) == 0.0);
    }
    SUBCASE("equal weights average the patches") {
        const DenseMatrix x =
            DenseMatrix::from_rows({{1.0, 2.0}, {3.0, 6.0}});
        const RoutingTable t = manual_table(2, 2, {0, 1, 0, 1},
                                            {0.5, 0.5, 0.5, 0.5});
        const DenseMatrix c = aggregate_slots(x, t);
        CHECK(std::abs(c(0, 0) - 2.0) < 1e-8);
        CHECK(std::abs(c(0, 1) - 4.0) < 1e-8);
    }
    SUBCASE("weight sums are reported without delta") {
        const DenseMatrix x = DenseMatrix::from_rows({{1.0}});
        const RoutingTable t = manual_table(1, 2, {0, 1}, {0.8, 0.2});
        std::vector<double> sums;
        aggregate_slots(x, t, &sums);
        CHECK(sums == std::vector<double>{0.8, 0.2});
    }
    SUBCASE("patch count mismatch is rejected") {
        const DenseMatrix x = DenseMatrix(3, 2);
        const RoutingTable t = manual_table(1, 2, {0, 1}, {0.5, 0.5});
        CHECK_THROWS_AS(aggregate_slots(x, t), ShapeError);
    }
}

TEST_CASE("aggregate_slots invariances") {
    RngState rng(41);
    const std::size_t n = 24, dim = 6, k = 4;
    DenseMatrix x(n, dim,
                  gaussian_sample(rng, n * dim, 0.0, 1.0));
    DenseMatrix logits(n, k, gaussian_sample(rng, n * k, 0.0, 1.0));
    const DenseMatrix probs = softmax_rows(logits);
    const RoutingTable table = top_k_select(probs, 2);
    const DenseMatrix base = aggregate_slots(x, table);

    SUBCASE("patch permutation leaves pooled slots unchanged") {
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 5 + 2) % n;
        DenseMatrix xp(n, dim);
        RoutingTable tp = table;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) xp(i, d) = x(perm[i], d);
            for (std::size_t t = 0; t < 2; ++t) {
                tp.slots[i * 2 + t] = table.slots[perm[i] * 2 + t];
                tp.weights[i * 2 + t] = table.weights[perm[i] * 2 + t];
            }
        }
        const DenseMatrix permuted = aggregate_slots(xp, tp);
        for (std::size_t s = 0; s < k; ++s)
            for (std::size_t d = 0; d < dim; ++d)
                CHECK(std::abs(permuted(s, d) - base(s, d)) < 1e-9);
    }

    SUBCASE("common weight scaling cancels up to delta") {
        std::vector<double> sums;
        aggregate_slots(x, table, &sums);
        RoutingTable scaled = table;
        const double gamma = 3.7;
        for (double& w : scaled.weights) w *= gamma;
        const DenseMatrix c2 = aggregate_slots(x, scaled);
        for (std::size_t s = 0; s < k; ++s) {
            if (sums[s] < 0.1) continue;
            for (std::size_t d = 0; d < dim; ++d)
                CHECK(std::abs(c2(s, d) - base(s, d)) < 1e-6);
        }
    }

    SUBCASE("identical routed features reach the closed form") {
        const DenseMatrix xx = DenseMatrix::from_rows(
            {{2.0, -1.0}, {2.0, -1.0}, {2.0, -1.0}});
        const RoutingTable t = manual_table(
            3, 2, {0, 1, 0, 1, 0, 1}, {0.9, 0.1, 0.6, 0.4, 0.75, 0.25});
        std::vector<double> sums;
        const DenseMatrix c = aggregate_slots(xx, t, &sums);
        for (std::size_t d = 0; d < 2; ++d) {
            const double expected =
                xx(0, d) * sums[0] / (sums[0] + kPoolingDelta);
            CHECK(std::abs(c(0, d) - expected) < 1e-12);
        }
    }
}

TEST_CASE("refine_slots applies the MLP per row") {
    SUBCASE("all-zero parameters give zero output") {
        SlotMlpParams mlp;
        mlp.activation = Activation::gelu;
        mlp.w1 = DenseMatrix(3, 6);
        mlp.b1.assign(6, 0.0);
        mlp.w2 = DenseMatrix(6, 3);
        mlp.b2.assign(3, 0.0);
        const DenseMatrix raw = DenseMatrix::from_rows({{1, 2, 3}, {4, 5, 6}});
        const SlotTokens out = refine_slots(raw, mlp);
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t d = 0; d < 3; ++d)
                CHECK(out.tokens(k, d) == 0.0);
    }
    SUBCASE("identity composition reproduces the input") {
        const DenseMatrix raw =
            DenseMatrix::from_rows({{1.5, -2.0}, {0.25, 4.0}});
        const SlotTokens out = refine_slots(raw, identity_mlp(2));
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t d = 0; d < 2; ++d)
                CHECK(out.tokens(k, d) == doctest::Approx(raw(k, d)));
    }
    SUBCASE("scalar smooth-gelu hand evaluation") {
        SlotMlpParams mlp;
        mlp.activation = Activation::gelu;
        mlp.w1 = DenseMatrix::from_rows({{3.0}});
        mlp.b1 = {1.0};
        mlp.w2 = DenseMatrix::from_rows({{0.5}});
        mlp.b2 = {0.0};
        const DenseMatrix raw = DenseMatrix::from_rows({{2.0}});
        const SlotTokens out = refine_slots(raw, mlp);
        CHECK(std::abs(out.tokens(0, 0) - 0.5 * gelu_oracle(7.0)) < 1e-12);
        CHECK(out.tokens(0, 0) == doctest::Approx(3.5).epsilon(1e-6));
    }
    SUBCASE("residual adds the input row") {
        const DenseMatrix raw = DenseMatrix::from_rows({{1.0, -1.0}});
        const SlotTokens plain = refine_slots(raw, identity_mlp(2), false);
        const SlotTokens res = refine_slots(raw, identity_mlp(2), true);
        for (std::size_t d = 0; d < 2; ++d)
            CHECK(res.tokens(0, d) ==
                  doctest::Approx(2.0 * plain.tokens(0, d)));
    }
    SUBCASE("per-slot parameter lists must match the slot count") {
        const DenseMatrix raw = DenseMatrix(3, 2);
        std::vector<SlotMlpParams> two{identity_mlp(2), identity_mlp(2)};
        CHECK_THROWS_AS(refine_slots(raw, two), InvalidConfigError);
        std::vector<SlotMlpParams> three{identity_mlp(2), identity_mlp(2),
                                         identity_mlp(2)};
        CHECK(refine_slots(raw, three).tokens.rows() == 3);
    }
    SUBCASE("input width must match layer 1") {
        const DenseMatrix raw = DenseMatrix(2, 3);
        CHECK_THROWS_AS(refine_slots(raw, identity_mlp(2)), ShapeError);
    }
}

TEST_CASE("activation gradients match finite differences") {
    for (const Activation act : {Activation::identity, Activation::gelu}) {
        for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
            const double h = 1e-6;
            const double numeric = (activation_apply(act, x + h) -
                                    activation_apply(act, x - h)) /
                                   (2.0 * h);
            CHECK(activation_grad(act, x) ==
                  doctest::Approx(numeric).epsilon(1e-7));
        }
    }
}

TEST_CASE("compress keeps the fixed token budget") {
    RngState rng = RngState::scoped(51, "init");
    const ModelDims dims{8, 16, 16, 8, 2};
    const ModelParams params =
        init_model_params(dims, true, Activation::gelu, false, rng);

    RngState data(52);
    FeatureBatch batch;
    for (std::size_t n : {1u, 3u, 40u, 117u})
        batch.emplace_back(n, 8, gaussian_sample(data, n * 8, 0.0, 1.0));

    const auto items = compress(batch, params);
    REQUIRE(items.size() == 4);
    for (const auto& item : items) {
        CHECK(item.tokens.tokens.rows() == 16);
        CHECK(item.tokens.tokens.cols() == 8);
        CHECK(item.tokens.tokens.all_finite());
        CHECK(item.table.top_k == 2);
    }

    FeatureBatch with_empty = batch;
    with_empty.emplace_back(0, 8);
    CHECK_THROWS_AS(compress(with_empty, params), InvalidInputError);
}

TEST_CASE("diagonal routing reproduces per-patch features") {
    const std::size_t k = 4;
    ModelParams params;
    params.gate.weight = DenseMatrix(k, k);
    for (std::size_t i = 0; i < k; ++i) params.gate.weight(i, i) = 200.0;
    params.slot_mlps = {identity_mlp(k)};
    params.head.weight = DenseMatrix(k, 2);
    params.head.bias.assign(2, 0.0);

    DenseMatrix x(k, k);
    for (std::size_t i = 0; i < k; ++i) x(i, i) = 1.0;

    const auto items = compress({x}, params);
    const DenseMatrix& tokens = items.front().tokens.tokens;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t d = 0; d < k; ++d)
            CHECK(std::abs(tokens(i, d) - x(i, d)) < 1e-6);
}
