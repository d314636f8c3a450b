#pragma once

#include <stdexcept>
#include <string>

namespace tsception {

// Shape/axis disagreement between tensors or between a tensor and an op.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid hyperparameter or model configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filter design cannot satisfy the requested band.
struct DesignError : std::runtime_error {
    explicit DesignError(const std::string& msg) : std::runtime_error(msg) {}
};

// On-disk format violations (bad magic, truncation, version skew).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset content violations (channel order, label protocol, fs mismatch).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate numeric input (zero variance, all-zero energy, NaN loss).
struct ValueError : std::runtime_error {
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tsception
