#include "ssa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "ssa/errors.hpp"
#include "ssa/numerics.hpp"
#include "ssa/rng.hpp"

namespace ssa {

namespace {

void validate(const SyntheticBagConfig& config) {
    if (config.n_patches == 0 || config.feature_dim == 0)
        throw InvalidConfigError("synthetic: empty bag geometry");
    if (config.n_clusters < 2)
        throw InvalidConfigError("synthetic: need at least 2 clusters");
    if (config.evidence_cluster >= config.n_clusters)
        throw InvalidConfigError("synthetic: evidence cluster out of range");
    if (!(config.evidence_fraction > 0.0) || !(config.evidence_fraction < 1.0))
        throw InvalidConfigError("synthetic: evidence_fraction must be in (0, 1)");
    if (config.evidence_fraction * static_cast<double>(config.n_patches) < 1.0)
        throw InvalidConfigError(
            "synthetic: evidence_fraction too small for bag size");
    if (!(config.cluster_separation >= 0.0))
        throw InvalidConfigError("synthetic: negative cluster separation");
    if (config.label_noise < 0.0 || config.label_noise > 1.0)
        throw InvalidConfigError("synthetic: label_noise must be in [0, 1]");
}

std::size_t pick_background_cluster(RngState& rng,
                                    const SyntheticBagConfig& config) {
    const std::size_t idx = rng.next_below(config.n_clusters - 1);
    return idx >= config.evidence_cluster ? idx + 1 : idx;
}

Bag make_bag(RngState& rng, const SyntheticBagConfig& config,
             const DenseMatrix& centroids, std::size_t true_label) {
    const std::size_t n = config.n_patches;
    const std::size_t dim = config.feature_dim;
    const std::size_t n_evidence =
        true_label == 1
            ? std::max<std::size_t>(
                  1, static_cast<std::size_t>(std::llround(
                         config.evidence_fraction * static_cast<double>(n))))
            : 0;

    std::vector<std::size_t> clusters(n);
    for (std::size_t j = 0; j < n; ++j)
        clusters[j] = j < n_evidence ? config.evidence_cluster
                                     : pick_background_cluster(rng, config);

    DenseMatrix features(n, dim);
    for (std::size_t j = 0; j < n; ++j) {
        const auto centroid = centroids.row(clusters[j]);
        const std::vector<double> noise = gaussian_sample(rng, dim, 0.0, 1.0);
        for (std::size_t d = 0; d < dim; ++d)
            features(j, d) = centroid[d] + noise[d];
    }

    // Fisher-Yates over rows so evidence patches are not positionally coded.
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.next_below(i + 1);
        if (i == j) continue;
        for (std::size_t d = 0; d < dim; ++d)
            std::swap(features(i, d), features(j, d));
    }

    Bag bag;
    bag.features = std::move(features);
    bag.label = true_label;
    if (config.label_noise > 0.0 && rng.next_unit() < config.label_noise)
        bag.label = 1 - bag.label;
    return bag;
}

std::vector<Bag> make_split(RngState& rng, const SyntheticBagConfig& config,
                            const DenseMatrix& centroids, std::size_t count) {
    std::vector<Bag> bags;
    bags.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        bags.push_back(make_bag(rng, config, centroids, i % 2));
    return bags;
}

} // namespace

DatasetSplits generate_synthetic_bags(const SyntheticBagConfig& config,
                                      std::uint64_t seed) {
    validate(config);
    RngState rng = RngState::scoped(seed, "data");

    DatasetSplits splits;
    splits.centroids = DenseMatrix(
        config.n_clusters, config.feature_dim,
        gaussian_sample(rng, config.n_clusters * config.feature_dim, 0.0,
                        config.cluster_separation));
    splits.train = make_split(rng, config, splits.centroids, config.train_bags);
    splits.val = make_split(rng, config, splits.centroids, config.val_bags);
    splits.test = make_split(rng, config, splits.centroids, config.test_bags);
    return splits;
}

double nearest_centroid_accuracy(const std::vector<Bag>& bags,
                                 const DenseMatrix& centroids,
                                 std::size_t evidence_cluster) {
    if (bags.empty())
        throw InvalidInputError("nearest_centroid_accuracy: no bags");
    if (evidence_cluster >= centroids.rows())
        throw InvalidInputError(
            "nearest_centroid_accuracy: evidence cluster out of range");

    std::size_t correct = 0;
    for (const auto& bag : bags) {
        bool has_evidence = false;
        for (std::size_t j = 0; j < bag.features.rows() && !has_evidence; ++j) {
            const auto x = bag.features.row(j);
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_k = 0;
            for (std::size_t k = 0; k < centroids.rows(); ++k) {
                const auto c = centroids.row(k);
                double dist = 0.0;
                for (std::size_t d = 0; d < x.size(); ++d) {
                    const double diff = x[d] - c[d];
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    best_k = k;
                }
            }
            has_evidence = best_k == evidence_cluster;
        }
        const std::size_t prediction = has_evidence ? 1 : 0;
        if (prediction == bag.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(bags.size());
}

} // namespace ssa
