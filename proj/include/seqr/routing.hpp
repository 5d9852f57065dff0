#pragma once

// Activation-norm routing: score every adapter for an input, pick the winner,
// apply its update.
//
// Score functions accept any random-access range whose elements convert to the
// form type, so callers can pass a std::vector of forms or a view that repeats
// a small pool of forms (the benchmark does this).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ranges>
#include <string>
#include <string_view>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/errors.hpp"
#include "seqr/linalg.hpp"
#include "seqr/zscore.hpp"

namespace seqr {

template <class R, class T>
concept RangeOf = std::ranges::random_access_range<R> && std::ranges::sized_range<R> &&
                  std::convertible_to<std::ranges::range_reference_t<R>, const T&>;

enum class Method { naive, arrow, spectr, lag, seqr, mu };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::naive: return "naive";
        case Method::arrow: return "arrow";
        case Method::spectr: return "spectr";
        case Method::lag: return "lag";
        case Method::seqr: return "seqr";
        case Method::mu: return "mu";
    }
    return "unknown";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (Method m : {Method::naive, Method::arrow, Method::spectr, Method::lag, Method::seqr, Method::mu})
        if (to_string(m) == s) return m;
    return std::nullopt;
}

inline constexpr double kFilteredOut = -std::numeric_limits<double>::infinity();

struct BaseLayer {
    Matrix w;  // m x n, frozen
};

struct RoutingDecision {
    Method method = Method::naive;
    Scores scores;                        // index-aligned with the library; -inf marks LAG-filtered adapters
    std::optional<std::size_t> selected;  // empty for mu, which merges instead of selecting
};

// Lowest index attaining the maximum. -inf entries are allowed.
inline std::size_t select(std::span<const double> scores) {
    if (scores.empty()) throw InvalidArgument("select: no scores");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (std::isnan(scores[i])) throw InvalidArgument("select: NaN score at index " + std::to_string(i));
        if (scores[i] > scores[best]) best = i;
    }
    if (std::isnan(scores[0])) throw InvalidArgument("select: NaN score at index 0");
    return best;
}

namespace detail {
inline void require_dim(const Vector& x, std::size_t n, const char* who) {
    if (x.dim() != n) {
        throw DimensionError(std::string(who) + ": input dim " + std::to_string(x.dim()) + ", expected " +
                             std::to_string(n));
    }
}

inline Scores maybe_zscore(Scores raw, const CalibrationStats* stats) {
    return stats == nullptr ? raw : zscore(raw, *stats);
}
}  // namespace detail

// ‖B_i A_i x‖ computed directly: r·n + m·r multiply-accumulates per adapter.
template <RangeOf<LoraAdapter> R>
Scores score_naive(const R& adapters, const Vector& x) {
    Scores out;
    out.reserve(std::ranges::size(adapters));
    for (const LoraAdapter& ad : adapters) {
        detail::require_dim(x, ad.a->cols(), "score_naive");
        out.push_back(norm2(matvec(ad.b, matvec(*ad.a, x))));
    }
    return out;
}

inline Scores score_naive(const AdapterLibrary& lib, const Vector& x) { return score_naive(lib.adapters(), x); }

// |v_iᵀ x|. Arrow vectors are unit length, so these are never z-scored.
template <RangeOf<ArrowForm> R>
Scores score_arrow(const R& forms, const Vector& x) {
    Scores out;
    out.reserve(std::ranges::size(forms));
    for (const ArrowForm& f : forms) {
        detail::require_dim(x, f.v.dim(), "score_arrow");
        out.push_back(std::abs(dot(f.v, x)));
    }
    return out;
}

// ‖Â_i x‖, z-scored when stats are given.
template <RangeOf<SpectrForm> R>
Scores score_spectr(const R& forms, const Vector& x, const CalibrationStats* stats = nullptr) {
    Scores raw;
    raw.reserve(std::ranges::size(forms));
    for (const SpectrForm& f : forms) {
        detail::require_dim(x, f.a_hat.cols(), "score_spectr");
        raw.push_back(norm2(matvec(f.a_hat, x)));
    }
    return detail::maybe_zscore(std::move(raw), stats);
}

struct SeqrScores {
    Scores scores;
    std::vector<Vector> h;  // R_i z, kept for the output projection
    Vector z;               // A x
};

// Score from a precomputed z = A x: r² multiply-accumulates per adapter.
template <RangeOf<SeqrForm> R>
SeqrScores score_seqr_from_z(const R& forms, const Vector& z, const CalibrationStats* stats = nullptr) {
    SeqrScores out{{}, {}, z};
    out.scores.reserve(std::ranges::size(forms));
    out.h.reserve(std::ranges::size(forms));
    for (const SeqrForm& f : forms) {
        detail::require_dim(z, f.r_mat.cols(), "score_seqr");
        auto h = matvec(f.r_mat, z);
        out.scores.push_back(norm2(h));
        out.h.push_back(std::move(h));
    }
    out.scores = detail::maybe_zscore(std::move(out.scores), stats);
    return out;
}

template <RangeOf<SeqrForm> R>
SeqrScores score_seqr(const R& forms, const Matrix& shared_a, const Vector& x, const CalibrationStats* stats = nullptr) {
    detail::require_dim(x, shared_a.cols(), "score_seqr");
    return score_seqr_from_z(forms, matvec(shared_a, x), stats);
}

inline SeqrScores score_seqr(const AdapterLibrary& lib, const std::vector<SeqrForm>& forms, const Vector& x,
                             const CalibrationStats* stats = nullptr) {
    if (!lib.has_shared_a()) throw ConfigError("SEQR scoring requires a shared-A library");
    return score_seqr(forms, lib.shared_a(), x, stats);
}

// Indices of the k largest scores, ties to the lower index, in selection order.
inline std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
    if (k == 0 || k > scores.size()) {
        throw InvalidArgument("top_k: k = " + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(k);
    return idx;
}

// Two-stage routing: keep the top-k adapters by Arrow score, then pick the
// best SpectR score among them. Filtered adapters carry kFilteredOut.
template <RangeOf<ArrowForm> RA, RangeOf<SpectrForm> RS>
RoutingDecision route_lag(const RA& arrows, const RS& spectr, const Vector& x, std::size_t k,
                          const CalibrationStats* stats = nullptr) {
    const std::size_t count = std::ranges::size(arrows);
    if (std::ranges::size(spectr) != count) throw DimensionError("route_lag: arrow and spectr form counts differ");
    if (k == 0 || k > count) {
        throw InvalidArgument("route_lag: k = " + std::to_string(k) + " outside [1, " + std::to_string(count) + "]");
    }
    const auto keep = top_k(score_arrow(arrows, x), k);

    RoutingDecision d{Method::lag, Scores(count, kFilteredOut), std::nullopt};
    for (std::size_t i : keep) {
        const SpectrForm& f = spectr[i];
        detail::require_dim(x, f.a_hat.cols(), "route_lag");
        double s = norm2(matvec(f.a_hat, x));
        if (stats != nullptr) {
            if (stats->mu.size() != count || stats->sigma.size() != count) throw DimensionError("route_lag: stats size");
            s = (s - stats->mu[i]) / stats->sigma[i];
        }
        d.scores[i] = s;
    }
    d.selected = select(d.scores);
    return d;
}

namespace detail {
inline Vector base_output(const BaseLayer& base, const Vector& x) {
    require_dim(x, base.w.cols(), "base layer");
    return matvec(base.w, x);
}
}  // namespace detail

// y = W x + Q h, where h = R A x from score_seqr.
inline Vector apply_seqr(const BaseLayer& base, const Vector& x, const SeqrForm& winner, const Vector& h_winner) {
    auto y = detail::base_output(base, x);
    if (winner.q.rows() != y.dim()) throw DimensionError("apply_seqr: Q rows do not match base output");
    detail::require_dim(h_winner, winner.q.cols(), "apply_seqr");
    return add(y, matvec(winner.q, h_winner));
}

// y = W x + B A x
inline Vector apply_generic(const BaseLayer& base, const Vector& x, const LoraAdapter& adapter) {
    auto y = detail::base_output(base, x);
    if (adapter.b.rows() != y.dim()) throw DimensionError("apply_generic: B rows do not match base output");
    return add(y, matvec(adapter.b, matvec(*adapter.a, x)));
}

// y = W x + (1/N) Σ B_i A_i x
inline Vector mu_merge(const AdapterLibrary& lib, const BaseLayer& base, const Vector& x) {
    if (lib.size() == 0) throw InvalidArgument("mu_merge: empty library");
    auto y = detail::base_output(base, x);
    if (lib.dims().m != y.dim()) throw DimensionError("mu_merge: library output dim does not match base");
    Vector sum(y.dim());
    for (const auto& ad : lib.adapters()) sum = add(sum, matvec(ad.b, matvec(*ad.a, x)));
    return add(y, scaled(sum, 1.0 / static_cast<double>(lib.size())));
}

struct RouteOptions {
    std::size_t k = 1;                            // LAG filter size
    const CalibrationStats* stats = nullptr;      // z-score SpectR/SEQR/LAG when set
};

// Score and select with one method, using whichever preprocessed forms it needs.
inline RoutingDecision route(Method method, const AdapterLibrary& lib, const RoutedForms& forms, const Vector& x,
                             const RouteOptions& opts = {}) {
    auto need = [&](bool present, const char* what) {
        if (!present) throw ConfigError(std::string(to_string(method)) + " routing needs " + what + " forms");
    };
    RoutingDecision d{method, {}, std::nullopt};
    switch (method) {
        case Method::naive:
            d.scores = score_naive(lib, x);
            break;
        case Method::arrow:
            need(forms.arrow.has_value(), "arrow");
            d.scores = score_arrow(*forms.arrow, x);
            break;
        case Method::spectr:
            need(forms.spectr.has_value(), "spectr");
            d.scores = score_spectr(*forms.spectr, x, opts.stats);
            break;
        case Method::lag:
            need(forms.arrow.has_value(), "arrow");
            need(forms.spectr.has_value(), "spectr");
            return route_lag(*forms.arrow, *forms.spectr, x, opts.k, opts.stats);
        case Method::seqr:
            need(forms.seqr.has_value(), "seqr");
            d.scores = score_seqr(lib, *forms.seqr, x, opts.stats).scores;
            break;
        case Method::mu:
            return d;
    }
    d.selected = select(d.scores);
    return d;
}

}  // namespace seqr
