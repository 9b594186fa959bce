// SPDX-License-Identifier: Apache-2.0
#pragma once
#include <stdexcept>
#include <string>

namespace sta {

// Operand shapes are incompatible (inner dims, broadcast, grid divisibility).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A documented precondition was violated (bad config value, non-scalar loss).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Temporal cache holds entries inconsistent with the requested frame window.
struct CacheError : std::runtime_error {
    explicit CacheError(const std::string& msg) : std::runtime_error(msg) {}
};

// A file failed to parse (bad magic, truncated payload, missing file).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Metric has no defined value (all class unions zero, no valid pixels).
struct UndefinedMetricError : std::runtime_error {
    explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf surfaced where finite values are required (training loss).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace sta
