#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vat {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or extents; message names the offending shapes.
struct DimensionError : Error {
    using Error::Error;
};

// A violated operation contract (non-scalar backward root, empty ensemble, ...).
struct ContractError : Error {
    using Error::Error;
};

// Reduction requested over too few elements.
struct DegenerateReductionError : ContractError {
    using ContractError::ContractError;
};

// Invalid user-facing configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed external file; carries the byte offset where parsing failed.
struct FormatError : Error {
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"), byte_offset(offset) {}
    std::size_t byte_offset;
};

// Metric undefined for the given inputs (single-class labels, ...).
struct UndefinedMetricError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Non-finite value encountered during training; message carries diagnostics.
struct NumericsError : Error {
    using Error::Error;
};

}  // namespace vat
