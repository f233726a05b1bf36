#include "ssa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <utility>

#include "ssa/errors.hpp"
#include "ssa/gradients.hpp"
#include "ssa/numerics.hpp"
#include "ssa/parallel.hpp"
#include "ssa/rng.hpp"

namespace ssa {

namespace {

double max_load(const RoutingStats& stats) {
    double m = 0.0;
    for (double f : stats.load) m = std::max(m, f);
    return m;
}

} // namespace

void adam_step(std::vector<double>& params, std::span<const double> grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: size mismatch");
    if (!all_finite(grads))
        throw NumericalError("adam_step: non-finite gradient");

    ++state.step;
    const AdamConfig& cfg = state.config;
    const double bc1 =
        1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 =
        1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

EvalResult evaluate(const ModelParams& params, const std::vector<Bag>& bags,
                    std::size_t top_k, const LossConstants& constants) {
    if (bags.empty()) throw InvalidInputError("evaluate: no bags");
    const std::size_t n_classes = params.head.bias.size();
    const std::size_t out_dim = params.head.weight.rows();

    DenseMatrix scores(bags.size(), n_classes);
    std::vector<RoutingStats> parts(bags.size());
    std::vector<double> lse_sq(bags.size(), 0.0);
    std::vector<std::exception_ptr> errors(bags.size());

    parallel_for(bags.size(), [&](std::size_t b) {
        try {
            const DenseMatrix& x = bags[b].features;
            if (x.rows() == 0) throw InvalidInputError("evaluate: empty bag");
            auto [logits, probs] = gate_forward(x, params.gate);
            const RoutingTable table = top_k_select(probs, top_k);
            parts[b] = routing_stats(probs, table);
            const DenseMatrix raw =
                aggregate_slots(x, table, nullptr, constants.delta);
            const SlotTokens tokens =
                refine_slots(raw, params.slot_mlps, params.residual);
            const std::size_t n_slots = tokens.tokens.rows();

            std::vector<double> repr(out_dim, 0.0);
            for (std::size_t k = 0; k < n_slots; ++k) {
                const auto row = tokens.tokens.row(k);
                for (std::size_t d = 0; d < out_dim; ++d) repr[d] += row[d];
            }
            for (double& v : repr) v /= static_cast<double>(n_slots);

            for (std::size_t c = 0; c < n_classes; ++c) {
                double z = params.head.bias[c];
                for (std::size_t d = 0; d < out_dim; ++d)
                    z += repr[d] * params.head.weight(d, c);
                scores(b, c) = z;
            }
            for (double v : log_sum_exp_rows(logits)) lse_sq[b] += v * v;
        } catch (...) {
            errors[b] = std::current_exception();
        }
    });
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    EvalResult result;
    result.stats = merge_routing_stats(parts);

    std::vector<std::size_t> labels(bags.size());
    std::size_t total_patches = 0;
    double z_acc = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < bags.size(); ++b) {
        labels[b] = bags[b].label;
        total_patches += bags[b].features.rows();
        z_acc += lse_sq[b];
        std::size_t best = 0;
        for (std::size_t c = 1; c < n_classes; ++c)
            if (scores(b, c) > scores(b, best)) best = c;
        if (best == bags[b].label) ++correct;
    }
    result.accuracy =
        static_cast<double>(correct) / static_cast<double>(bags.size());

    const double task = task_loss_cross_entropy(scores, labels);
    const double z =
        constants.alpha * z_acc / static_cast<double>(total_patches);
    result.loss = combine_losses(task, switch_loss(result.stats),
                                 entropy_loss(result.stats, constants.epsilon),
                                 z, constants);
    return result;
}

TrainResult train(const DatasetSplits& data, const TrainConfig& config) {
    if (data.train.empty()) throw InvalidInputError("train: empty train split");
    if (config.batch_size == 0)
        throw InvalidConfigError("train: batch_size must be >= 1");
    if (config.top_k == 0 || config.top_k > config.n_slots)
        throw InvalidConfigError("train: top_k must be in [1, n_slots]");

    const std::size_t feature_dim = data.train.front().features.cols();
    ModelDims dims;
    dims.feature_dim = feature_dim;
    dims.n_slots = config.n_slots;
    dims.hidden_dim =
        config.hidden_dim != 0 ? config.hidden_dim : 2 * feature_dim;
    dims.out_dim = config.out_dim != 0 ? config.out_dim : feature_dim;
    dims.n_classes = config.n_classes;

    RngState init_rng = RngState::scoped(config.seed, "init");
    ModelParams params =
        init_model_params(dims, config.shared_mlp, config.activation,
                          config.residual, init_rng);
    RngState shuffle_rng = RngState::scoped(config.seed, "shuffle");

    TrainResult result;
    result.report.seed = config.seed;
    result.report.config = config;

    {
        const EvalResult init_eval =
            evaluate(params, data.train, config.top_k, config.constants);
        result.report.init =
            EpochRecord{init_eval.loss, init_eval.stats,
                        max_load(init_eval.stats)};
    }

    AdamConfig adam_cfg;
    adam_cfg.lr = config.lr;
    AdamState adam(params.parameter_count(), adam_cfg);

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            const std::size_t j = shuffle_rng.next_below(i + 1);
            std::swap(order[i], order[j]);
        }

        LossBreakdown epoch_loss;
        epoch_loss.lambda = config.constants.lambda;
        std::vector<RoutingStats> parts;
        std::size_t n_batches = 0;
        bool failed = false;

        for (std::size_t start = 0; start < order.size();
             start += config.batch_size) {
            const std::size_t end =
                std::min(order.size(), start + config.batch_size);
            FeatureBatch items;
            std::vector<std::size_t> labels;
            items.reserve(end - start);
            labels.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                items.push_back(data.train[order[i]].features);
                labels.push_back(data.train[order[i]].label);
            }
            try {
                const ForwardTape tape = run_forward(
                    items, labels, params, config.top_k, config.constants);
                if (!std::isfinite(tape.loss.total))
                    throw NumericalError("train: non-finite loss");
                const GradientSet grads = backward(tape, config.constants);
                std::vector<double> flat = params.flatten();
                adam_step(flat, grads.flatten(), adam);
                if (!all_finite(flat))
                    throw NumericalError(
                        "train: non-finite parameters after update");
                params.assign_from_flat(flat);

                epoch_loss.task += tape.loss.task;
                epoch_loss.switch_loss += tape.loss.switch_loss;
                epoch_loss.entropy += tape.loss.entropy;
                epoch_loss.z += tape.loss.z;
                epoch_loss.total += tape.loss.total;
                parts.push_back(tape.merged);
                ++n_batches;
            } catch (const Error&) {
                failed = true;
                break;
            }
        }
        if (failed) {
            result.report.diverged = true;
            break;
        }

        const double scale = 1.0 / static_cast<double>(n_batches);
        epoch_loss.task *= scale;
        epoch_loss.switch_loss *= scale;
        epoch_loss.entropy *= scale;
        epoch_loss.z *= scale;
        epoch_loss.total *= scale;

        EpochRecord record;
        record.loss = epoch_loss;
        record.stats = merge_routing_stats(parts);
        record.max_load = max_load(record.stats);
        result.report.epochs.push_back(std::move(record));
    }

    // Divergence can leave parameters that are finite but overflow the next
    // forward pass, so the final metrics are skipped or abandoned rather than
    // letting the evaluation throw.
    if (!result.report.diverged) try {
            const EvalResult train_eval =
                evaluate(params, data.train, config.top_k, config.constants);
            result.report.final_max_load = max_load(train_eval.stats);
            if (!data.val.empty())
                result.report.final_val_accuracy =
                    evaluate(params, data.val, config.top_k, config.constants)
                        .accuracy;
            if (!data.test.empty())
                result.report.final_test_accuracy =
                    evaluate(params, data.test, config.top_k, config.constants)
                        .accuracy;
        } catch (const Error&) {
            result.report.diverged = true;
            result.report.final_max_load = 0.0;
            result.report.final_val_accuracy = 0.0;
            result.report.final_test_accuracy = 0.0;
        }
    result.params = std::move(params);
    return result;
}

} // namespace ssa
