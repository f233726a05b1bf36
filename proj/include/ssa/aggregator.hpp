#pragma once

#include <cstddef>
#include <vector>

#include "ssa/matrix.hpp"
#include "ssa/router.hpp"

namespace ssa {

// Denominator guard in weighted pooling; empty slots become zero vectors.
inline constexpr double kPoolingDelta = 1e-9;

enum class Activation { identity, gelu };

double activation_apply(Activation act, double x);
double activation_grad(Activation act, double x);

struct SlotMlpParams {
    DenseMatrix w1;          // D x H
    std::vector<double> b1;  // H
    DenseMatrix w2;          // H x D'
    std::vector<double> b2;  // D'
    Activation activation = Activation::gelu;
};

// Fixed-budget compressed output: exactly K token rows per item.
struct SlotTokens {
    DenseMatrix tokens;
};

// Intermediate activations kept for the backward pass.
struct MlpTrace {
    DenseMatrix pre_activation;  // K x H
    DenseMatrix hidden;          // K x H
};

using FeatureBatch = std::vector<DenseMatrix>;

// c_k = (sum_j w_{j,k} x_j) / (sum_j w_{j,k} + delta) over the table's
// selected patches. weight_sums, when given, receives the raw per-slot
// denominator sums (without delta).
DenseMatrix aggregate_slots(const DenseMatrix& x, const RoutingTable& table,
                            std::vector<double>* weight_sums = nullptr,
                            double delta = kPoolingDelta);

// Applies the two-layer MLP to each slot row independently. mlps holds
// either one shared parameter set or one per slot row.
SlotTokens refine_slots(const DenseMatrix& raw,
                        const std::vector<SlotMlpParams>& mlps,
                        bool residual = false, MlpTrace* trace = nullptr);

SlotTokens refine_slots(const DenseMatrix& raw, const SlotMlpParams& mlp,
                        bool residual = false, MlpTrace* trace = nullptr);

} // namespace ssa
