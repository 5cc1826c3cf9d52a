#pragma once

#include <stdexcept>
#include <string>

namespace nstab {

// Typed failures so callers can distinguish "bad input" from "solver gave up".
// All derive from std::runtime_error; what() carries the offending values.

struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BalanceError : std::runtime_error {
    explicit BalanceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ScaleError : std::runtime_error {
    explicit ScaleError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvariantError : std::runtime_error {
    explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateError : std::runtime_error {
    explicit DegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AntiSymmetryError : std::runtime_error {
    explicit AntiSymmetryError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MetadataError : std::runtime_error {
    explicit MetadataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nstab
