#pragma once

#include <stdexcept>

namespace ssa {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite or otherwise inadmissible values.
struct InvalidInputError : Error {
    using Error::Error;
};

// Dimension mismatch between operands.
struct ShapeError : Error {
    using Error::Error;
};

// Inconsistent configuration (e.g. top_k > K, K = 1 for the entropy term).
struct InvalidConfigError : Error {
    using Error::Error;
};

// Non-finite intermediate produced during computation.
struct NumericalError : Error {
    using Error::Error;
};

// Bad magic bytes or unsupported version in a binary file.
struct FormatError : Error {
    using Error::Error;
};

// File shorter/longer than its header claims.
struct CorruptionError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace ssa
