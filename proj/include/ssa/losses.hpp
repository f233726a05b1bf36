#pragma once

#include <cstddef>
#include <vector>

#include "ssa/matrix.hpp"
#include "ssa/router.hpp"

namespace ssa {

struct LossConstants {
    double delta = 1e-9;         // pooling denominator guard
    double epsilon = 1e-8;       // entropy log argument guard
    double alpha = 1e-4;         // z-loss scale
    double lambda = 0.1;         // auxiliary suite weight
    double entropy_coeff = 0.5;  // entropy share inside the suite
};

struct LossBreakdown {
    double task = 0.0;
    double switch_loss = 0.0;
    double entropy = 0.0;
    double z = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

// K * sum_k mean_prob_k * load_k. Equals 1 when mean_prob is uniform.
double switch_loss(const RoutingStats& stats);

// 1 - H(mean_prob) / log K with the epsilon-guarded log. 0 at uniform,
// approaches 1 at one-hot.
double entropy_loss(const RoutingStats& stats, double epsilon = 1e-8);

// alpha * mean_j (log sum_k exp logits_{j,k})^2.
double z_loss(const DenseMatrix& logits, double alpha = 1e-4);

// Mean negative log-likelihood of the true class under row-wise softmax.
double task_loss_cross_entropy(const DenseMatrix& class_logits,
                               const std::vector<std::size_t>& labels);

// task + lambda * (switch + entropy_coeff * entropy + z), fields populated.
LossBreakdown combine_losses(double task, double switch_value, double entropy,
                             double z, const LossConstants& constants);

LossBreakdown total_loss(double task, const RoutingStats& stats,
                         const DenseMatrix& logits,
                         const LossConstants& constants);

} // namespace ssa
