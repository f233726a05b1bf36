#include "ssa/router.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "ssa/errors.hpp"
#include "ssa/numerics.hpp"

namespace ssa {

std::pair<DenseMatrix, DenseMatrix> gate_forward(const DenseMatrix& x,
                                                 const GateParams& gate) {
    if (gate.weight.rows() < 2)
        throw InvalidConfigError("gate_forward: need at least 2 slots");
    if (x.cols() != gate.weight.cols())
        throw ShapeError("gate_forward: feature dim mismatch");
    DenseMatrix logits = matmul_nt(x, gate.weight);
    DenseMatrix probs = softmax_rows(logits);
    return {std::move(logits), std::move(probs)};
}

RoutingTable top_k_select(const DenseMatrix& probs, std::size_t top_k) {
    const std::size_t n = probs.rows();
    const std::size_t k_slots = probs.cols();
    if (top_k == 0) throw InvalidConfigError("top_k_select: top_k must be >= 1");
    if (top_k > k_slots)
        throw InvalidConfigError("top_k_select: top_k exceeds slot count");

    RoutingTable table;
    table.n_patches = n;
    table.n_slots = k_slots;
    table.top_k = top_k;
    table.slots.resize(n * top_k);
    table.weights.resize(n * top_k);
    table.boundary_margin = std::numeric_limits<double>::infinity();

    std::vector<std::uint32_t> order(k_slots);
    for (std::size_t j = 0; j < n; ++j) {
        const auto row = probs.row(j);
        std::iota(order.begin(), order.end(), 0u);
        std::partial_sort(order.begin(), order.begin() + top_k, order.end(),
                          [&row](std::uint32_t a, std::uint32_t b) {
                              if (row[a] != row[b]) return row[a] > row[b];
                              return a < b;
                          });
        for (std::size_t t = 0; t < top_k; ++t) {
            table.slots[j * top_k + t] = order[t];
            table.weights[j * top_k + t] = row[order[t]];
        }
        if (top_k < k_slots) {
            double best_rejected = -std::numeric_limits<double>::infinity();
            for (std::size_t t = top_k; t < k_slots; ++t)
                best_rejected = std::max(best_rejected, row[order[t]]);
            table.boundary_margin = std::min(
                table.boundary_margin, row[order[top_k - 1]] - best_rejected);
        }
    }
    return table;
}

RoutingStats routing_stats(const DenseMatrix& probs, const RoutingTable& table) {
    if (table.n_patches != probs.rows() || table.n_slots != probs.cols())
        throw ShapeError("routing_stats: table does not match probs");
    const std::size_t n = probs.rows();
    const std::size_t k_slots = probs.cols();
    if (n == 0) throw InvalidInputError("routing_stats: empty batch");

    RoutingStats stats;
    stats.n_patches = n;
    stats.top_k = table.top_k;
    stats.mean_prob.assign(k_slots, 0.0);
    stats.counts.assign(k_slots, 0);
    for (std::size_t j = 0; j < n; ++j) {
        const auto row = probs.row(j);
        for (std::size_t k = 0; k < k_slots; ++k) stats.mean_prob[k] += row[k];
        for (std::size_t t = 0; t < table.top_k; ++t)
            ++stats.counts[table.slot(j, t)];
    }
    for (double& p : stats.mean_prob) p /= static_cast<double>(n);

    stats.load.resize(k_slots);
    const double denom = static_cast<double>(n * table.top_k);
    for (std::size_t k = 0; k < k_slots; ++k)
        stats.load[k] = static_cast<double>(stats.counts[k]) / denom;
    return stats;
}

RoutingStats merge_routing_stats(const std::vector<RoutingStats>& parts) {
    if (parts.empty())
        throw InvalidInputError("merge_routing_stats: no parts");
    const std::size_t k_slots = parts.front().mean_prob.size();
    const std::size_t top_k = parts.front().top_k;

    RoutingStats merged;
    merged.top_k = top_k;
    merged.mean_prob.assign(k_slots, 0.0);
    merged.counts.assign(k_slots, 0);
    for (const auto& part : parts) {
        if (part.mean_prob.size() != k_slots || part.counts.size() != k_slots)
            throw ShapeError("merge_routing_stats: slot count mismatch");
        if (part.top_k != top_k)
            throw InvalidConfigError("merge_routing_stats: top_k mismatch");
        const double w = static_cast<double>(part.n_patches);
        for (std::size_t k = 0; k < k_slots; ++k) {
            merged.mean_prob[k] += w * part.mean_prob[k];
            merged.counts[k] += part.counts[k];
        }
        merged.n_patches += part.n_patches;
    }
    if (merged.n_patches == 0)
        throw InvalidInputError("merge_routing_stats: zero total patches");
    for (double& p : merged.mean_prob) p /= static_cast<double>(merged.n_patches);

    merged.load.resize(k_slots);
    const double denom = static_cast<double>(merged.n_patches * top_k);
    for (std::size_t k = 0; k < k_slots; ++k)
        merged.load[k] = static_cast<double>(merged.counts[k]) / denom;
    return merged;
}

} // namespace ssa
