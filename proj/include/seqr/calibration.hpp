#pragma once

// Per-adapter activation-norm statistics for z-scored routing.
//
// Each adapter is calibrated on samples from its own task: mu is the mean and
// sigma the sample standard deviation (divisor count - 1) of that adapter's raw
// score over those samples, with sigma floored at kSigmaFloor.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/errors.hpp"
#include "seqr/routing.hpp"
#include "seqr/zscore.hpp"

namespace seqr {

struct SampleMoments {
    double mean = 0.0;
    double stddev = 0.0;  // divisor count - 1
};

inline SampleMoments sample_moments(std::span<const double> values) {
    if (values.size() < 2) throw InvalidArgument("sample_moments: need at least 2 values");
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

// Raw score of adapter `index` for input x.
using RawScoreFn = std::function<double(std::size_t index, const Vector& x)>;

inline CalibrationStats calibrate_with(std::size_t n_adapters, std::size_t input_dim,
                                       const std::vector<std::vector<Vector>>& samples, const RawScoreFn& raw_score) {
    if (samples.size() != n_adapters) {
        throw DimensionError("calibrate: samples for " + std::to_string(samples.size()) + " adapters, library has " +
                             std::to_string(n_adapters));
    }
    CalibrationStats stats{std::vector<double>(n_adapters), std::vector<double>(n_adapters)};
    std::vector<double> norms;
    for (std::size_t i = 0; i < n_adapters; ++i) {
        if (samples[i].size() < 2) {
            throw InvalidArgument("calibrate: adapter " + std::to_string(i) + " has " +
                                  std::to_string(samples[i].size()) + " samples, need at least 2");
        }
        norms.clear();
        for (const auto& x : samples[i]) {
            if (x.dim() != input_dim) {
                throw DimensionError("calibrate: sample dim " + std::to_string(x.dim()) + ", expected " +
                                     std::to_string(input_dim));
            }
            norms.push_back(raw_score(i, x));
        }
        const auto mom = sample_moments(norms);
        stats.mu[i] = mom.mean;
        stats.sigma[i] = std::max(mom.stddev, kSigmaFloor);
    }
    return stats;
}

inline CalibrationStats calibrate_spectr(const std::vector<SpectrForm>& forms,
                                         const std::vector<std::vector<Vector>>& samples) {
    if (forms.empty()) throw InvalidArgument("calibrate: no forms");
    return calibrate_with(forms.size(), forms.front().a_hat.cols(), samples, [&](std::size_t i, const Vector& x) {
        return norm2(matvec(forms[i].a_hat, x));
    });
}

inline CalibrationStats calibrate_seqr(const std::vector<SeqrForm>& forms, const Matrix& shared_a,
                                       const std::vector<std::vector<Vector>>& samples) {
    if (forms.empty()) throw InvalidArgument("calibrate: no forms");
    return calibrate_with(forms.size(), shared_a.cols(), samples, [&](std::size_t i, const Vector& x) {
        return norm2(matvec(forms[i].r_mat, matvec(shared_a, x)));
    });
}

inline CalibrationStats calibrate_naive(const AdapterLibrary& lib, const std::vector<std::vector<Vector>>& samples) {
    return calibrate_with(lib.size(), lib.dims().n, samples, [&](std::size_t i, const Vector& x) {
        const auto& ad = lib[i];
        return norm2(matvec(ad.b, matvec(*ad.a, x)));
    });
}

// Calibrate the raw scores of `method`. LAG shares SpectR's scores.
inline CalibrationStats calibrate(const AdapterLibrary& lib, const RoutedForms& forms,
                                  const std::vector<std::vector<Vector>>& samples, Method method) {
    switch (method) {
        case Method::naive:
            return calibrate_naive(lib, samples);
        case Method::spectr:
        case Method::lag:
            if (!forms.spectr) throw ConfigError("calibrate: spectr forms missing");
            return calibrate_spectr(*forms.spectr, samples);
        case Method::seqr:
            if (!forms.seqr) throw ConfigError("calibrate: seqr forms missing");
            if (!lib.has_shared_a()) throw ConfigError("calibrate: SEQR requires a shared-A library");
            return calibrate_seqr(*forms.seqr, lib.shared_a(), samples);
        case Method::arrow:
        case Method::mu:
            break;
    }
    throw ConfigError(std::string("calibrate: method '") + std::string(to_string(method)) + "' is not z-scored");
}

}  // namespace seqr
