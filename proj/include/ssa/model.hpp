#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssa/aggregator.hpp"
#include "ssa/matrix.hpp"
#include "ssa/rng.hpp"
#include "ssa/router.hpp"

namespace ssa {

struct HeadParams {
    DenseMatrix weight;        // D' x C
    std::vector<double> bias;  // C
};

struct ModelDims {
    std::size_t feature_dim = 0;
    std::size_t n_slots = 0;
    std::size_t hidden_dim = 0;
    std::size_t out_dim = 0;
    std::size_t n_classes = 0;
};

// Full trainable state. slot_mlps holds one entry when shared across slots,
// or exactly n_slots entries otherwise. The flat view keeps a fixed order:
// gate, then each MLP's w1/b1/w2/b2, then head weight and bias.
struct ModelParams {
    GateParams gate;
    std::vector<SlotMlpParams> slot_mlps;
    HeadParams head;
    bool residual = false;

    ModelDims dims() const;
    std::size_t parameter_count() const;
    std::vector<double> flatten() const;
    void assign_from_flat(std::span<const double> flat);
};

// Gaussian init with stddev 1/sqrt(fan_in) per weight matrix, zero biases.
ModelParams init_model_params(const ModelDims& dims, bool shared_mlp,
                              Activation activation, bool residual,
                              RngState& rng);

} // namespace ssa
