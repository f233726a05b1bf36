#include "ssa/model.hpp"

#include <cmath>

#include "ssa/errors.hpp"
#include "ssa/numerics.hpp"

namespace ssa {

namespace {

void append_matrix(std::vector<double>& out, const DenseMatrix& m) {
    const auto vals = m.values();
    out.insert(out.end(), vals.begin(), vals.end());
}

void take_matrix(std::span<const double>& flat, DenseMatrix& m) {
    const std::size_t n = m.rows() * m.cols();
    if (flat.size() < n)
        throw ShapeError("assign_from_flat: vector too short");
    m = DenseMatrix(m.rows(), m.cols(),
                    std::vector<double>(flat.begin(), flat.begin() + n));
    flat = flat.subspan(n);
}

void take_vector(std::span<const double>& flat, std::vector<double>& v) {
    if (flat.size() < v.size())
        throw ShapeError("assign_from_flat: vector too short");
    for (double& x : v) {
        if (!std::isfinite(flat.front()))
            throw InvalidInputError("assign_from_flat: non-finite value");
        x = flat.front();
        flat = flat.subspan(1);
    }
}

DenseMatrix gaussian_matrix(RngState& rng, std::size_t rows, std::size_t cols,
                            std::size_t fan_in) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return DenseMatrix(rows, cols, gaussian_sample(rng, rows * cols, 0.0, stddev));
}

} // namespace

ModelDims ModelParams::dims() const {
    ModelDims d;
    d.n_slots = gate.weight.rows();
    d.feature_dim = gate.weight.cols();
    if (!slot_mlps.empty()) {
        d.hidden_dim = slot_mlps.front().w1.cols();
        d.out_dim = slot_mlps.front().w2.cols();
    }
    d.n_classes = head.bias.size();
    return d;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = gate.weight.rows() * gate.weight.cols();
    for (const auto& mlp : slot_mlps) {
        n += mlp.w1.rows() * mlp.w1.cols() + mlp.b1.size();
        n += mlp.w2.rows() * mlp.w2.cols() + mlp.b2.size();
    }
    n += head.weight.rows() * head.weight.cols() + head.bias.size();
    return n;
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    append_matrix(out, gate.weight);
    for (const auto& mlp : slot_mlps) {
        append_matrix(out, mlp.w1);
        out.insert(out.end(), mlp.b1.begin(), mlp.b1.end());
        append_matrix(out, mlp.w2);
        out.insert(out.end(), mlp.b2.begin(), mlp.b2.end());
    }
    append_matrix(out, head.weight);
    out.insert(out.end(), head.bias.begin(), head.bias.end());
    return out;
}

void ModelParams::assign_from_flat(std::span<const double> flat) {
    if (flat.size() != parameter_count())
        throw ShapeError("assign_from_flat: size does not match model");
    take_matrix(flat, gate.weight);
    for (auto& mlp : slot_mlps) {
        take_matrix(flat, mlp.w1);
        take_vector(flat, mlp.b1);
        take_matrix(flat, mlp.w2);
        take_vector(flat, mlp.b2);
    }
    take_matrix(flat, head.weight);
    take_vector(flat, head.bias);
}

ModelParams init_model_params(const ModelDims& dims, bool shared_mlp,
                              Activation activation, bool residual,
                              RngState& rng) {
    if (dims.n_slots < 2)
        throw InvalidConfigError("init_model_params: need at least 2 slots");
    if (dims.feature_dim < 1 || dims.hidden_dim < 1 || dims.out_dim < 1)
        throw InvalidConfigError("init_model_params: dims must be positive");
    if (dims.n_classes < 2)
        throw InvalidConfigError("init_model_params: need at least 2 classes");
    if (residual && dims.out_dim != dims.feature_dim)
        throw InvalidConfigError(
            "init_model_params: residual needs out_dim == feature_dim");

    ModelParams params;
    params.residual = residual;
    params.gate.weight =
        gaussian_matrix(rng, dims.n_slots, dims.feature_dim, dims.feature_dim);

    const std::size_t n_mlps = shared_mlp ? 1 : dims.n_slots;
    params.slot_mlps.reserve(n_mlps);
    for (std::size_t i = 0; i < n_mlps; ++i) {
        SlotMlpParams mlp;
        mlp.activation = activation;
        mlp.w1 = gaussian_matrix(rng, dims.feature_dim, dims.hidden_dim,
                                 dims.feature_dim);
        mlp.b1.assign(dims.hidden_dim, 0.0);
        mlp.w2 =
            gaussian_matrix(rng, dims.hidden_dim, dims.out_dim, dims.hidden_dim);
        mlp.b2.assign(dims.out_dim, 0.0);
        params.slot_mlps.push_back(std::move(mlp));
    }

    params.head.weight =
        gaussian_matrix(rng, dims.out_dim, dims.n_classes, dims.out_dim);
    params.head.bias.assign(dims.n_classes, 0.0);
    return params;
}

} // namespace ssa
