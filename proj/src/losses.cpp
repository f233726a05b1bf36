#include "ssa/losses.hpp"

#include <cmath>

#include "ssa/errors.hpp"
#include "ssa/numerics.hpp"

namespace ssa {

double switch_loss(const RoutingStats& stats) {
    const std::size_t n_slots = stats.mean_prob.size();
    if (n_slots == 0 || stats.load.size() != n_slots)
        throw ShapeError("switch_loss: malformed stats");
    double acc = 0.0;
    for (std::size_t k = 0; k < n_slots; ++k)
        acc += stats.mean_prob[k] * stats.load[k];
    return static_cast<double>(n_slots) * acc;
}

double entropy_loss(const RoutingStats& stats, double epsilon) {
    const std::size_t n_slots = stats.mean_prob.size();
    if (n_slots < 2)
        throw InvalidConfigError("entropy_loss: needs at least 2 slots");
    double entropy = 0.0;
    for (double p : stats.mean_prob) entropy -= p * std::log(p + epsilon);
    return 1.0 - entropy / std::log(static_cast<double>(n_slots));
}

double z_loss(const DenseMatrix& logits, double alpha) {
    if (logits.rows() == 0)
        throw InvalidInputError("z_loss: empty logits");
    const std::vector<double> lse = log_sum_exp_rows(logits);
    double acc = 0.0;
    for (double v : lse) acc += v * v;
    return alpha * acc / static_cast<double>(lse.size());
}

double task_loss_cross_entropy(const DenseMatrix& class_logits,
                               const std::vector<std::size_t>& labels) {
    if (labels.size() != class_logits.rows())
        throw ShapeError("task_loss_cross_entropy: one label per row required");
    if (class_logits.rows() == 0)
        throw InvalidInputError("task_loss_cross_entropy: empty batch");
    for (std::size_t label : labels)
        if (label >= class_logits.cols())
            throw InvalidInputError("task_loss_cross_entropy: label out of range");
    const std::vector<double> lse = log_sum_exp_rows(class_logits);
    double acc = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        acc += lse[i] - class_logits(i, labels[i]);
    return acc / static_cast<double>(labels.size());
}

LossBreakdown combine_losses(double task, double switch_value, double entropy,
                             double z, const LossConstants& constants) {
    LossBreakdown out;
    out.task = task;
    out.switch_loss = switch_value;
    out.entropy = entropy;
    out.z = z;
    out.lambda = constants.lambda;
    out.total = task + constants.lambda *
                           (switch_value + constants.entropy_coeff * entropy + z);
    return out;
}

LossBreakdown total_loss(double task, const RoutingStats& stats,
                         const DenseMatrix& logits,
                         const LossConstants& constants) {
    return combine_losses(task, switch_loss(stats),
                          entropy_loss(stats, constants.epsilon),
                          z_loss(logits, constants.alpha), constants);
}

} // namespace ssa
