#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssa/aggregator.hpp"
#include "ssa/losses.hpp"
#include "ssa/model.hpp"
#include "ssa/router.hpp"
#include "ssa/synthetic.hpp"

namespace ssa {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
    AdamConfig config;

    explicit AdamState(std::size_t n, AdamConfig cfg = {})
        : m(n, 0.0), v(n, 0.0), config(cfg) {}
};

// Bias-corrected Adam update over a flat parameter vector, in place.
void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state);

struct TrainConfig {
    std::size_t n_slots = 32;
    std::size_t top_k = 2;
    std::size_t hidden_dim = 0;  // 0 selects 2 * feature_dim
    std::size_t out_dim = 0;     // 0 selects feature_dim
    std::size_t n_classes = 2;
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch_size = 8;
    std::uint64_t seed = 1;
    bool shared_mlp = true;
    bool residual = false;
    Activation activation = Activation::gelu;
    LossConstants constants{};
};

struct EpochRecord {
    LossBreakdown loss;   // mean over the epoch's batches
    RoutingStats stats;   // merged over the epoch's batches
    double max_load = 0.0;
};

struct TrainReport {
    EpochRecord init;  // evaluation on the train split before any update
    std::vector<EpochRecord> epochs;
    double final_val_accuracy = 0.0;
    double final_test_accuracy = 0.0;
    double final_max_load = 0.0;
    bool diverged = false;
    std::uint64_t seed = 0;
    TrainConfig config;
};

struct TrainResult {
    TrainReport report;
    ModelParams params;
};

struct EvalResult {
    double accuracy = 0.0;
    RoutingStats stats;
    LossBreakdown loss;
};

// Full-dataset forward pass without parameter mutation.
EvalResult evaluate(const ModelParams& params, const std::vector<Bag>& bags,
                    std::size_t top_k, const LossConstants& constants);

// Mini-batch training with the combined objective. A non-finite loss or
// gradient aborts the run; the report then carries the completed epochs and
// the diverged flag.
TrainResult train(const DatasetSplits& data, const TrainConfig& config);

} // namespace ssa
