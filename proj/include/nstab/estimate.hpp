#pragma once

#include <cstdint>
#include <string>

namespace nstab {

// Common carrier for every estimated probability/value in the library.
// Deterministic paths (quadrature, closed forms) report std_error = 0 and
// n_samples = 0; Monte Carlo paths echo the seed that produced the estimate.
struct StabilityEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::uint64_t n_samples = 0;
    std::string method;
    std::uint64_t seed = 0;
};

}  // namespace nstab
