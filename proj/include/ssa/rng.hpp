#pragma once

#include <cstdint>
#include <string_view>

namespace ssa {

// Counter-based deterministic generator: draw i is mix64(seed + (i+1)*gamma).
// The u64/uniform streams use only integer and IEEE arithmetic, so the same
// seed yields the same stream on every platform. Single-owner; concurrent use
// requires split() (children are keyed off the parent's seed and counter).
class RngState {
public:
    explicit RngState(std::uint64_t seed) : seed_(seed), counter_(0) {}

    // Domain-separated stream, e.g. scoped(seed, "init") vs scoped(seed, "data").
    static RngState scoped(std::uint64_t seed, std::string_view domain);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 significant bits.
    double next_unit();

    // Unbiased uniform integer in [0, n); n must be > 0.
    std::uint64_t next_below(std::uint64_t n);

    // Child generator with an independent stream; advances this one.
    RngState split();

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

} // namespace ssa
