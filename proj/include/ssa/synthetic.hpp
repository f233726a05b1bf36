#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssa/matrix.hpp"

namespace ssa {

// Bag-of-patches classification task: every patch is a unit-noise gaussian
// around one of n_clusters centroids, and only positive bags contain patches
// from the evidence cluster (a small fixed fraction, mimicking sparse
// diagnostic evidence in a large slide).
struct SyntheticBagConfig {
    std::size_t n_patches = 1024;
    std::size_t feature_dim = 16;
    std::size_t n_clusters = 6;
    std::size_t evidence_cluster = 0;
    double evidence_fraction = 0.02;
    double cluster_separation = 4.0;
    double label_noise = 0.0;
    std::size_t train_bags = 64;
    std::size_t val_bags = 32;
    std::size_t test_bags = 32;
};

struct Bag {
    DenseMatrix features;
    std::size_t label = 0;
};

struct DatasetSplits {
    std::vector<Bag> train;
    std::vector<Bag> val;
    std::vector<Bag> test;
    DenseMatrix centroids;  // n_clusters x feature_dim
};

DatasetSplits generate_synthetic_bags(const SyntheticBagConfig& config,
                                      std::uint64_t seed);

// Solvability ceiling: predict positive iff any patch falls nearest to the
// evidence centroid. Run before training to confirm the task is learnable
// from raw patches.
double nearest_centroid_accuracy(const std::vector<Bag>& bags,
                                 const DenseMatrix& centroids,
                                 std::size_t evidence_cluster);

} // namespace ssa
