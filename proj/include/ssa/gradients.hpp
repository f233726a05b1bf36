#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ssa/aggregator.hpp"
#include "ssa/losses.hpp"
#include "ssa/matrix.hpp"
#include "ssa/model.hpp"
#include "ssa/router.hpp"

namespace ssa {

struct MlpGrads {
    DenseMatrix w1;
    std::vector<double> b1;
    DenseMatrix w2;
    std::vector<double> b2;
};

// Parameter gradients, shape-congruent to ModelParams with the same flat
// ordering.
struct GradientSet {
    DenseMatrix gate_weight;
    std::vector<MlpGrads> slot_mlps;
    DenseMatrix head_weight;
    std::vector<double> head_bias;

    static GradientSet zeros_like(const ModelParams& params);
    std::vector<double> flatten() const;
};

// Everything backward() needs from one bag's forward pass.
struct BagTape {
    DenseMatrix x;
    DenseMatrix logits;
    DenseMatrix probs;
    RoutingTable table;
    DenseMatrix raw_slots;
    std::vector<double> slot_weight_sums;
    MlpTrace trace;
    DenseMatrix tokens;
    std::vector<double> bag_repr;
    std::vector<double> lse;
    std::size_t label = 0;
};

struct ForwardTape {
    std::vector<BagTape> bags;
    DenseMatrix head_logits;  // B x C
    RoutingStats merged;
    LossBreakdown loss;
    std::size_t total_patches = 0;
    std::size_t top_k = 2;
    ModelParams params;
};

ForwardTape run_forward(const FeatureBatch& items,
                        const std::vector<std::size_t>& labels,
                        const ModelParams& params, std::size_t top_k,
                        const LossConstants& constants);

// Reverse-mode gradients of loss.total under the fixed conventions: the
// sparse selection mask and the load fractions are constants, gradient flows
// through selected probabilities only, and the pooling quotient includes the
// delta term.
GradientSet backward(const ForwardTape& tape, const LossConstants& constants);

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
std::vector<double> finite_difference_grad(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::vector<double> params, double h = 1e-5);

struct CheckEntry {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct CheckReport {
    double max_rel_error = 0.0;  // over unflagged coordinates
    std::size_t flagged = 0;
    std::size_t total = 0;
    std::vector<CheckEntry> worst;
    bool passed = false;
};

// Relative error |a-n| / max(|a|, |n|, abs_tol) per coordinate. Flagged
// coordinates are excluded from the pass decision and tallied separately.
CheckReport grad_check(const GradientSet& analytic,
                       std::span<const double> numeric, double rel_tol,
                       double abs_tol,
                       const std::vector<bool>& boundary_flags = {});

struct PipelineCheckConfig {
    std::size_t top_k = 2;
    double h = 1e-5;
    double rel_tol = 1e-4;
    double abs_tol = 1e-6;
    LossConstants constants{};
};

// End-to-end certification: analytic backward vs central differences over
// every parameter. A coordinate is flagged as boundary-adjacent when either
// perturbed forward pass changes the selected slot set, or when it moves a
// routing margin that sits within 10h of a selection tie. Coordinates that
// cannot influence routing (MLP, head) are never margin-flagged.
CheckReport check_pipeline_gradients(const FeatureBatch& items,
                                     const std::vector<std::size_t>& labels,
                                     const ModelParams& params,
                                     const PipelineCheckConfig& config = {});

struct RandomInstance {
    FeatureBatch items;
    std::vector<std::size_t> labels;
    ModelParams params;
};

RandomInstance make_random_instance(std::uint64_t seed, std::size_t n_bags,
                                    std::size_t n_patches,
                                    std::size_t feature_dim,
                                    std::size_t n_slots,
                                    std::size_t n_classes,
                                    bool shared_mlp = true,
                                    bool residual = false);

} // namespace ssa
