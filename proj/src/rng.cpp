#include "ssa/rng.hpp"

#include "ssa/errors.hpp"

namespace ssa {
namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Alternate finalizer, used to key child streams and domain tags.
std::uint64_t mix64_alt(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
    return z ^ (z >> 33);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

} // namespace

RngState RngState::scoped(std::uint64_t seed, std::string_view domain) {
    return RngState(mix64_alt(mix64(seed) ^ fnv1a(domain)));
}

std::uint64_t RngState::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGamma);
}

double RngState::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngState::next_below(std::uint64_t n) {
    if (n == 0) throw InvalidInputError("RngState::next_below: n must be positive");
    // Rejection sampling over the largest multiple of n.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

RngState RngState::split() {
    return RngState(mix64_alt(next_u64()));
}

} // namespace ssa
