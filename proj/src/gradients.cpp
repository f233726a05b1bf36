#include "ssa/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "ssa/errors.hpp"
#include "ssa/numerics.hpp"
#include "ssa/parallel.hpp"

namespace ssa {

namespace {

std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

void require_finite(const DenseMatrix& m, const char* layer) {
    if (!m.all_finite())
        throw NumericalError(std::string("backward: non-finite gradient in ") +
                             layer);
}

void require_finite(const std::vector<double>& v, const char* layer) {
    if (!all_finite(v))
        throw NumericalError(std::string("backward: non-finite gradient in ") +
                             layer);
}

} // namespace

GradientSet GradientSet::zeros_like(const ModelParams& params) {
    GradientSet g;
    g.gate_weight =
        DenseMatrix(params.gate.weight.rows(), params.gate.weight.cols());
    g.slot_mlps.reserve(params.slot_mlps.size());
    for (const auto& mlp : params.slot_mlps) {
        MlpGrads mg;
        mg.w1 = DenseMatrix(mlp.w1.rows(), mlp.w1.cols());
        mg.b1.assign(mlp.b1.size(), 0.0);
        mg.w2 = DenseMatrix(mlp.w2.rows(), mlp.w2.cols());
        mg.b2.assign(mlp.b2.size(), 0.0);
        g.slot_mlps.push_back(std::move(mg));
    }
    g.head_weight =
        DenseMatrix(params.head.weight.rows(), params.head.weight.cols());
    g.head_bias.assign(params.head.bias.size(), 0.0);
    return g;
}

std::vector<double> GradientSet::flatten() const {
    std::vector<double> out;
    const auto append_matrix = [&out](const DenseMatrix& m) {
        const auto vals = m.values();
        out.insert(out.end(), vals.begin(), vals.end());
    };
    append_matrix(gate_weight);
    for (const auto& mg : slot_mlps) {
        append_matrix(mg.w1);
        out.insert(out.end(), mg.b1.begin(), mg.b1.end());
        append_matrix(mg.w2);
        out.insert(out.end(), mg.b2.begin(), mg.b2.end());
    }
    append_matrix(head_weight);
    out.insert(out.end(), head_bias.begin(), head_bias.end());
    return out;
}

ForwardTape run_forward(const FeatureBatch& items,
                        const std::vector<std::size_t>& labels,
                        const ModelParams& params, std::size_t top_k,
                        const LossConstants& constants) {
    if (items.size() != labels.size())
        throw ShapeError("run_forward: one label per item required");
    if (items.empty()) throw InvalidInputError("run_forward: empty batch");

    ForwardTape tape;
    tape.params = params;
    tape.top_k = top_k;
    tape.bags.resize(items.size());
    const std::size_t n_classes = params.head.bias.size();
    const std::size_t out_dim = params.head.weight.rows();
    tape.head_logits = DenseMatrix(items.size(), n_classes);

    std::vector<std::exception_ptr> errors(items.size());
    parallel_for(items.size(), [&](std::size_t b) {
        try {
            BagTape& bag = tape.bags[b];
            bag.x = items[b];
            bag.label = labels[b];
            if (bag.x.rows() == 0)
                throw InvalidInputError("run_forward: empty item");
            auto [logits, probs] = gate_forward(bag.x, params.gate);
            bag.logits = std::move(logits);
            bag.probs = std::move(probs);
            bag.table = top_k_select(bag.probs, top_k);
            bag.raw_slots = aggregate_slots(bag.x, bag.table,
                                            &bag.slot_weight_sums,
                                            constants.delta);
            SlotTokens refined = refine_slots(bag.raw_slots, params.slot_mlps,
                                              params.residual, &bag.trace);
            bag.tokens = std::move(refined.tokens);
            if (bag.tokens.cols() != out_dim)
                throw ShapeError("run_forward: head input dim mismatch");

            const std::size_t n_slots = bag.tokens.rows();
            bag.bag_repr.assign(out_dim, 0.0);
            for (std::size_t k = 0; k < n_slots; ++k) {
                const auto row = bag.tokens.row(k);
                for (std::size_t d = 0; d < out_dim; ++d)
                    bag.bag_repr[d] += row[d];
            }
            for (double& v : bag.bag_repr)
                v /= static_cast<double>(n_slots);

            for (std::size_t c = 0; c < n_classes; ++c) {
                double z = params.head.bias[c];
                for (std::size_t d = 0; d < out_dim; ++d)
                    z += bag.bag_repr[d] * params.head.weight(d, c);
                tape.head_logits(b, c) = z;
            }
            bag.lse = log_sum_exp_rows(bag.logits);
        } catch (...) {
            errors[b] = std::current_exception();
        }
    });
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    std::vector<RoutingStats> parts;
    parts.reserve(tape.bags.size());
    double z_acc = 0.0;
    for (const auto& bag : tape.bags) {
        parts.push_back(routing_stats(bag.probs, bag.table));
        for (double v : bag.lse) z_acc += v * v;
        tape.total_patches += bag.x.rows();
    }
    tape.merged = merge_routing_stats(parts);
    const double z =
        constants.alpha * z_acc / static_cast<double>(tape.total_patches);
    const double task = task_loss_cross_entropy(tape.head_logits, labels);
    tape.loss = combine_losses(task, switch_loss(tape.merged),
                               entropy_loss(tape.merged, constants.epsilon), z,
                               constants);
    return tape;
}

GradientSet backward(const ForwardTape& tape, const LossConstants& constants) {
    const ModelParams& params = tape.params;
    GradientSet grads = GradientSet::zeros_like(params);
    const std::size_t n_bags = tape.bags.size();
    const std::size_t n_slots = params.gate.weight.rows();
    const std::size_t n_classes = params.head.bias.size();
    const std::size_t out_dim = params.head.weight.rows();
    const double n_tot = static_cast<double>(tape.total_patches);
    const double log_k = std::log(static_cast<double>(n_slots));
    const bool shared = params.slot_mlps.size() == 1;

    // Mean-probability gradient shared by every patch: switch term with the
    // load fractions held constant, plus the entropy term.
    std::vector<double> dmean(n_slots);
    for (std::size_t k = 0; k < n_slots; ++k) {
        const double p = tape.merged.mean_prob[k];
        const double dswitch =
            static_cast<double>(n_slots) * tape.merged.load[k];
        const double dent =
            (std::log(p + constants.epsilon) + p / (p + constants.epsilon)) /
            log_k;
        dmean[k] =
            constants.lambda * (dswitch + constants.entropy_coeff * dent);
    }

    const DenseMatrix head_probs = softmax_rows(tape.head_logits);

    for (std::size_t b = 0; b < n_bags; ++b) {
        const BagTape& bag = tape.bags[b];
        const std::size_t n = bag.x.rows();
        const std::size_t in_dim = bag.x.cols();
        const std::size_t hidden = bag.trace.pre_activation.cols();

        std::vector<double> dhl(n_classes);
        for (std::size_t c = 0; c < n_classes; ++c)
            dhl[c] = head_probs(b, c);
        dhl[bag.label] -= 1.0;
        for (double& v : dhl) v /= static_cast<double>(n_bags);

        std::vector<double> dr(out_dim, 0.0);
        for (std::size_t d = 0; d < out_dim; ++d) {
            const double r = bag.bag_repr[d];
            for (std::size_t c = 0; c < n_classes; ++c) {
                grads.head_weight(d, c) += r * dhl[c];
                dr[d] += params.head.weight(d, c) * dhl[c];
            }
        }
        for (std::size_t c = 0; c < n_classes; ++c)
            grads.head_bias[c] += dhl[c];

        // Mean pooling over slots spreads the same token gradient to every
        // slot row.
        std::vector<double> dt(out_dim);
        for (std::size_t d = 0; d < out_dim; ++d)
            dt[d] = dr[d] / static_cast<double>(n_slots);

        DenseMatrix draw(n_slots, in_dim);
        for (std::size_t k = 0; k < n_slots; ++k) {
            const SlotMlpParams& mlp =
                shared ? params.slot_mlps.front() : params.slot_mlps[k];
            MlpGrads& mg = shared ? grads.slot_mlps.front() : grads.slot_mlps[k];
            const auto raw = bag.raw_slots.row(k);
            for (std::size_t h = 0; h < hidden; ++h) {
                const double a = bag.trace.hidden(k, h);
                double da = 0.0;
                for (std::size_t d = 0; d < out_dim; ++d) {
                    mg.w2(h, d) += a * dt[d];
                    da += mlp.w2(h, d) * dt[d];
                }
                const double dz =
                    da * activation_grad(mlp.activation,
                                         bag.trace.pre_activation(k, h));
                mg.b1[h] += dz;
                for (std::size_t d = 0; d < in_dim; ++d) {
                    mg.w1(d, h) += raw[d] * dz;
                    draw(k, d) += mlp.w1(d, h) * dz;
                }
            }
            for (std::size_t d = 0; d < out_dim; ++d) mg.b2[d] += dt[d];
            if (params.residual)
                for (std::size_t d = 0; d < in_dim; ++d) draw(k, d) += dt[d];
        }

        // Pooling quotient rule: dw_{j,k} = <draw_k, x_j - c_k> / (S_k + delta)
        std::vector<double> denom(n_slots), draw_dot_c(n_slots);
        for (std::size_t k = 0; k < n_slots; ++k) {
            denom[k] = bag.slot_weight_sums[k] + constants.delta;
            draw_dot_c[k] = dot(draw.row(k), bag.raw_slots.row(k));
        }

        DenseMatrix dprobs(n, n_slots);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t t = 0; t < bag.table.top_k; ++t) {
                const std::size_t k = bag.table.slot(j, t);
                dprobs(j, k) +=
                    (dot(draw.row(k), bag.x.row(j)) - draw_dot_c[k]) / denom[k];
            }
            for (std::size_t k = 0; k < n_slots; ++k)
                dprobs(j, k) += dmean[k] / n_tot;
        }

        const double z_scale =
            constants.lambda * 2.0 * constants.alpha / n_tot;
        for (std::size_t j = 0; j < n; ++j) {
            const auto pr = bag.probs.row(j);
            const double inner = dot(dprobs.row(j), pr);
            const double zcoef = z_scale * bag.lse[j];
            for (std::size_t k = 0; k < n_slots; ++k) {
                const double g = pr[k] * (dprobs(j, k) - inner) + zcoef * pr[k];
                if (g == 0.0) continue;
                const auto xj = bag.x.row(j);
                for (std::size_t d = 0; d < in_dim; ++d)
                    grads.gate_weight(k, d) += g * xj[d];
            }
        }
    }

    require_finite(grads.head_weight, "task head");
    require_finite(grads.head_bias, "task head");
    for (const auto& mg : grads.slot_mlps) {
        require_finite(mg.w1, "slot mlp");
        require_finite(mg.b1, "slot mlp");
        require_finite(mg.w2, "slot mlp");
        require_finite(mg.b2, "slot mlp");
    }
    require_finite(grads.gate_weight, "gate");
    return grads;
}

std::vector<double> finite_difference_grad(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::vector<double> params, double h) {
    if (!(h > 0.0))
        throw InvalidInputError("finite_difference_grad: h must be positive");
    std::vector<double> grad(params.size());
    std::vector<std::exception_ptr> errors(params.size());
    parallel_for(params.size(), [&](std::size_t i) {
        try {
            std::vector<double> theta = params;
            theta[i] = params[i] + h;
            const double up = loss_fn(theta);
            theta[i] = params[i] - h;
            const double down = loss_fn(theta);
            grad[i] = (up - down) / (2.0 * h);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
    return grad;
}

CheckReport grad_check(const GradientSet& analytic,
                       std::span<const double> numeric, double rel_tol,
                       double abs_tol,
                       const std::vector<bool>& boundary_flags) {
    const std::vector<double> a = analytic.flatten();
    if (a.size() != numeric.size())
        throw ShapeError("grad_check: gradient size mismatch");
    if (!boundary_flags.empty() && boundary_flags.size() != a.size())
        throw ShapeError("grad_check: flag vector size mismatch");

    CheckReport report;
    report.total = a.size();
    std::vector<CheckEntry> entries;
    entries.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!boundary_flags.empty() && boundary_flags[i]) {
            ++report.flagged;
            continue;
        }
        const double scale = std::max({std::abs(a[i]), std::abs(numeric[i]),
                                       abs_tol});
        const double rel = std::abs(a[i] - numeric[i]) / scale;
        report.max_rel_error = std::max(report.max_rel_error, rel);
        entries.push_back({i, a[i], numeric[i], rel});
    }
    std::sort(entries.begin(), entries.end(),
              [](const CheckEntry& lhs, const CheckEntry& rhs) {
                  return lhs.rel_error > rhs.rel_error;
              });
    if (entries.size() > 5) entries.resize(5);
    report.worst = std::move(entries);
    report.passed = report.max_rel_error <= rel_tol;
    return report;
}

CheckReport check_pipeline_gradients(const FeatureBatch& items,
                                     const std::vector<std::size_t>& labels,
                                     const ModelParams& params,
                                     const PipelineCheckConfig& config) {
    const ForwardTape tape =
        run_forward(items, labels, params, config.top_k, config.constants);
    const GradientSet analytic = backward(tape, config.constants);
    const std::vector<double> flat = params.flatten();

    struct Probe {
        double loss;
        double margin;
        std::uint64_t digest;
    };
    const auto probe = [&](std::span<const double> theta) -> Probe {
        ModelParams p = params;
        p.assign_from_flat(theta);
        const ForwardTape t =
            run_forward(items, labels, p, config.top_k, config.constants);
        double margin = std::numeric_limits<double>::infinity();
        std::uint64_t digest = 0xcbf29ce484222325ull;
        for (const auto& bag : t.bags) {
            margin = std::min(margin, bag.table.boundary_margin);
            digest = fnv1a_bytes(bag.table.slots.data(),
                                 bag.table.slots.size() * sizeof(std::uint32_t),
                                 digest);
        }
        return {t.loss.total, margin, digest};
    };
    const Probe base = probe(flat);

    std::vector<double> numeric(flat.size());
    std::vector<char> flagged(flat.size(), 0);
    std::vector<std::exception_ptr> errors(flat.size());
    parallel_for(flat.size(), [&](std::size_t i) {
        try {
            std::vector<double> theta = flat;
            theta[i] = flat[i] + config.h;
            const Probe up = probe(theta);
            theta[i] = flat[i] - config.h;
            const Probe down = probe(theta);
            numeric[i] = (up.loss - down.loss) / (2.0 * config.h);
            // A coordinate that leaves every routing margin bitwise unchanged
            // cannot flip a selection, so only coordinates that move the
            // margin are excluded when a tie is near.
            const double near = 10.0 * config.h;
            const bool flipped =
                up.digest != base.digest || down.digest != base.digest;
            const bool moves_margin =
                up.margin != base.margin || down.margin != base.margin;
            if (flipped ||
                (moves_margin && std::min(up.margin, down.margin) < near))
                flagged[i] = 1;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    const std::vector<bool> flags(flagged.begin(), flagged.end());
    return grad_check(analytic, numeric, config.rel_tol, config.abs_tol, flags);
}

RandomInstance make_random_instance(std::uint64_t seed, std::size_t n_bags,
                                    std::size_t n_patches,
                                    std::size_t feature_dim,
                                    std::size_t n_slots,
                                    std::size_t n_classes, bool shared_mlp,
                                    bool residual) {
    RngState data_rng = RngState::scoped(seed, "check-data");
    RngState init_rng = RngState::scoped(seed, "check-init");

    RandomInstance inst;
    inst.items.reserve(n_bags);
    inst.labels.reserve(n_bags);
    for (std::size_t b = 0; b < n_bags; ++b) {
        inst.items.emplace_back(
            n_patches, feature_dim,
            gaussian_sample(data_rng, n_patches * feature_dim, 0.0, 1.0));
        inst.labels.push_back(data_rng.next_below(n_classes));
    }
    const ModelDims dims{feature_dim, n_slots, 2 * feature_dim, feature_dim,
                         n_classes};
    inst.params =
        init_model_params(dims, shared_mlp, Activation::gelu, residual,
                          init_rng);
    return inst;
}

} // namespace ssa
