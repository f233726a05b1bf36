#include "ssa/aggregator.hpp"

#include <cmath>

#include "ssa/errors.hpp"

namespace ssa {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

const SlotMlpParams& mlp_for_slot(const std::vector<SlotMlpParams>& mlps,
                                  std::size_t slot, std::size_t n_slots) {
    if (mlps.size() == 1) return mlps.front();
    if (mlps.size() != n_slots)
        throw InvalidConfigError("refine_slots: need 1 or K parameter sets");
    return mlps[slot];
}

void check_mlp_shapes(const SlotMlpParams& mlp, std::size_t in_dim) {
    if (mlp.w1.rows() != in_dim)
        throw ShapeError("refine_slots: input dim does not match layer 1");
    if (mlp.b1.size() != mlp.w1.cols())
        throw ShapeError("refine_slots: layer-1 bias length mismatch");
    if (mlp.w2.rows() != mlp.w1.cols())
        throw ShapeError("refine_slots: hidden dim mismatch between layers");
    if (mlp.b2.size() != mlp.w2.cols())
        throw ShapeError("refine_slots: layer-2 bias length mismatch");
}

} // namespace

double activation_apply(Activation act, double x) {
    switch (act) {
    case Activation::identity:
        return x;
    case Activation::gelu:
        return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    throw InvalidConfigError("unknown activation");
}

double activation_grad(Activation act, double x) {
    switch (act) {
    case Activation::identity:
        return 1.0;
    case Activation::gelu: {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
    }
    }
    throw InvalidConfigError("unknown activation");
}

DenseMatrix aggregate_slots(const DenseMatrix& x, const RoutingTable& table,
                            std::vector<double>* weight_sums, double delta) {
    if (table.n_patches != x.rows())
        throw ShapeError("aggregate_slots: table patch count mismatch");
    const std::size_t n_slots = table.n_slots;
    const std::size_t dim = x.cols();

    DenseMatrix out(n_slots, dim);
    std::vector<double> sums(n_slots, 0.0);
    for (std::size_t j = 0; j < table.n_patches; ++j) {
        const auto xj = x.row(j);
        for (std::size_t t = 0; t < table.top_k; ++t) {
            const std::size_t k = table.slot(j, t);
            const double w = table.weight(j, t);
            sums[k] += w;
            for (std::size_t d = 0; d < dim; ++d) out(k, d) += w * xj[d];
        }
    }
    for (std::size_t k = 0; k < n_slots; ++k) {
        const double denom = sums[k] + delta;
        for (std::size_t d = 0; d < dim; ++d) out(k, d) /= denom;
    }
    if (weight_sums) *weight_sums = std::move(sums);
    return out;
}

SlotTokens refine_slots(const DenseMatrix& raw,
                        const std::vector<SlotMlpParams>& mlps, bool residual,
                        MlpTrace* trace) {
    if (mlps.empty())
        throw InvalidConfigError("refine_slots: no MLP parameters");
    const std::size_t n_slots = raw.rows();
    const std::size_t in_dim = raw.cols();
    const std::size_t hidden_dim = mlps.front().w1.cols();
    const std::size_t out_dim = mlps.front().w2.cols();

    SlotTokens result;
    result.tokens = DenseMatrix(n_slots, out_dim);
    if (trace) {
        trace->pre_activation = DenseMatrix(n_slots, hidden_dim);
        trace->hidden = DenseMatrix(n_slots, hidden_dim);
    }

    for (std::size_t k = 0; k < n_slots; ++k) {
        const SlotMlpParams& mlp = mlp_for_slot(mlps, k, n_slots);
        check_mlp_shapes(mlp, in_dim);
        if (mlp.w1.cols() != hidden_dim || mlp.w2.cols() != out_dim)
            throw ShapeError("refine_slots: per-slot MLP dims differ");
        if (residual && out_dim != in_dim)
            throw InvalidConfigError(
                "refine_slots: residual needs matching input/output dims");

        const auto in = raw.row(k);
        for (std::size_t h = 0; h < hidden_dim; ++h) {
            double z = mlp.b1[h];
            for (std::size_t d = 0; d < in_dim; ++d)
                z += in[d] * mlp.w1(d, h);
            const double a = activation_apply(mlp.activation, z);
            if (trace) {
                trace->pre_activation(k, h) = z;
                trace->hidden(k, h) = a;
            }
            for (std::size_t d = 0; d < out_dim; ++d)
                result.tokens(k, d) += a * mlp.w2(h, d);
        }
        for (std::size_t d = 0; d < out_dim; ++d) {
            result.tokens(k, d) += mlp.b2[d];
            if (residual) result.tokens(k, d) += in[d];
        }
    }
    return result;
}

SlotTokens refine_slots(const DenseMatrix& raw, const SlotMlpParams& mlp,
                        bool residual, MlpTrace* trace) {
    const std::vector<SlotMlpParams> one{mlp};
    return refine_slots(raw, one, residual, trace);
}

} // namespace ssa
