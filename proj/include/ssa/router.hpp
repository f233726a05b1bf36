#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "ssa/matrix.hpp"

namespace ssa {

struct GateParams {
    // K x D, one row of mixing weights per slot
    DenseMatrix weight;
};

// Sparse assignment record: for each patch, the top_k selected slot indices
// and the truncated (not renormalized) probabilities, stored row by row in
// descending weight order with ties broken toward the smaller slot index.
struct RoutingTable {
    std::size_t n_patches = 0;
    std::size_t n_slots = 0;
    std::size_t top_k = 0;
    std::vector<std::uint32_t> slots;
    std::vector<double> weights;
    // Smallest gap across patches between the last selected probability and
    // the best rejected one; +inf when every slot is selected. Gradient
    // checking uses this to spot selection-boundary proximity.
    double boundary_margin = 0.0;

    std::uint32_t slot(std::size_t patch, std::size_t t) const {
        return slots[patch * top_k + t];
    }
    double weight(std::size_t patch, std::size_t t) const {
        return weights[patch * top_k + t];
    }
};

// Utilization summary used by the balancing losses. counts holds the raw
// integer assignment tallies so that load sums to one exactly.
struct RoutingStats {
    std::vector<double> mean_prob;
    std::vector<double> load;
    std::vector<std::size_t> counts;
    std::size_t n_patches = 0;
    std::size_t top_k = 0;
};

// logits = X * W^T, probs = softmax_rows(logits).
std::pair<DenseMatrix, DenseMatrix> gate_forward(const DenseMatrix& x,
                                                 const GateParams& gate);

RoutingTable top_k_select(const DenseMatrix& probs, std::size_t top_k = 2);

RoutingStats routing_stats(const DenseMatrix& probs, const RoutingTable& table);

// Combines per-bag stats into corpus-level stats, weighting mean_prob by
// patch count and summing assignment tallies.
RoutingStats merge_routing_stats(const std::vector<RoutingStats>& parts);

} // namespace ssa
