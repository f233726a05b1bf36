#pragma once

#include <cstddef>
#include <vector>

#include "ssa/matrix.hpp"
#include "ssa/rng.hpp"

namespace ssa {

// Row-wise softmax with max-subtraction. Throws InvalidInputError if any
// input entry is non-finite.
DenseMatrix softmax_rows(const DenseMatrix& logits);

// Per-row log-sum-exp, max-subtracted. Exact for single-column input.
std::vector<double> log_sum_exp_rows(const DenseMatrix& logits);

// n gaussian draws from the given stream. Box-Muller without caching, so
// consumption is exactly two uniforms per draw regardless of call pattern.
std::vector<double> gaussian_sample(RngState& rng, std::size_t n, double mean,
                                    double stddev);

} // namespace ssa
