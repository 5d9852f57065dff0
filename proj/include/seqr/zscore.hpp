#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/errors.hpp"

namespace seqr {

using Scores = std::vector<double>;

// Standard deviations are floored here so constant-norm adapters never divide by zero.
inline constexpr double kSigmaFloor = 1e-8;

// (raw[i] - mu[i]) / sigma[i]
inline Scores zscore(const Scores& raw, const CalibrationStats& stats) {
    if (raw.size() != stats.mu.size() || raw.size() != stats.sigma.size()) {
        throw DimensionError("zscore: " + std::to_string(raw.size()) + " scores vs " +
                             std::to_string(stats.mu.size()) + " calibrated adapters");
    }
    Scores out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - stats.mu[i]) / stats.sigma[i];
    return out;
}

}  // namespace seqr
