#include "ssa/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssa/errors.hpp"

namespace ssa {

DenseMatrix softmax_rows(const DenseMatrix& logits) {
    if (!logits.all_finite())
        throw InvalidInputError("softmax_rows: non-finite input");
    DenseMatrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto in = logits.row(i);
        double m = -std::numeric_limits<double>::infinity();
        for (double v : in) m = std::max(m, v);
        double sum = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            const double e = std::exp(in[j] - m);
            out(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < in.size(); ++j) out(i, j) /= sum;
    }
    return out;
}

std::vector<double> log_sum_exp_rows(const DenseMatrix& logits) {
    if (logits.cols() == 0)
        throw InvalidInputError("log_sum_exp_rows: zero columns");
    if (!logits.all_finite())
        throw InvalidInputError("log_sum_exp_rows: non-finite input");
    std::vector<double> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto in = logits.row(i);
        double m = -std::numeric_limits<double>::infinity();
        for (double v : in) m = std::max(m, v);
        if (in.size() == 1) {
            out[i] = in[0];
            continue;
        }
        double sum = 0.0;
        for (double v : in) sum += std::exp(v - m);
        out[i] = m + std::log(sum);
    }
    return out;
}

std::vector<double> gaussian_sample(RngState& rng, std::size_t n, double mean,
                                    double stddev) {
    if (!(stddev >= 0.0))
        throw InvalidInputError("gaussian_sample: negative stddev");
    std::vector<double> out(n);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < n; ++i) {
        const double u1 = rng.next_unit();
        const double u2 = rng.next_unit();
        // 1 - u1 is in (0, 1], keeping the log argument away from zero
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        out[i] = mean + stddev * (r * std::cos(two_pi * u2));
    }
    return out;
}

} // namespace ssa
