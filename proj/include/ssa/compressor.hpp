#pragma once

#include <cstddef>
#include <vector>

#include "ssa/aggregator.hpp"
#include "ssa/model.hpp"
#include "ssa/router.hpp"

namespace ssa {

struct CompressConfig {
    std::size_t top_k = 2;
};

struct CompressedItem {
    SlotTokens tokens;
    RoutingTable table;
    RoutingStats stats;
};

// Full compression path per batch item: gate, sparse selection, weighted
// pooling, MLP refinement. Output always has one fixed-size token block per
// item regardless of patch counts.
std::vector<CompressedItem> compress(const FeatureBatch& batch,
                                     const ModelParams& params,
                                     const CompressConfig& config = {});

} // namespace ssa
