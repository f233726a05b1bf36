#include "ssa/compressor.hpp"

#include <exception>

#include "ssa/errors.hpp"
#include "ssa/parallel.hpp"

namespace ssa {

std::vector<CompressedItem> compress(const FeatureBatch& batch,
                                     const ModelParams& params,
                                     const CompressConfig& config) {
    for (const auto& item : batch)
        if (item.rows() == 0)
            throw InvalidInputError("compress: empty item");

    std::vector<CompressedItem> out(batch.size());
    std::vector<std::exception_ptr> errors(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        try {
            auto [logits, probs] = gate_forward(batch[i], params.gate);
            RoutingTable table = top_k_select(probs, config.top_k);
            RoutingStats stats = routing_stats(probs, table);
            DenseMatrix raw = aggregate_slots(batch[i], table);
            SlotTokens tokens =
                refine_slots(raw, params.slot_mlps, params.residual);
            out[i] = CompressedItem{std::move(tokens), std::move(table),
                                    std::move(stats)};
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
    return out;
}

} // namespace ssa
