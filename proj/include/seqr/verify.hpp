#pragma once

// Self-checks run by `seqr verify`: the Arrow counterexample and randomized
// property suites for the norm-equivalence guarantees of SpectR and SEQR.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/linalg.hpp"
#include "seqr/routing.hpp"
#include "seqr/synthgen.hpp"

namespace seqr {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Gaussian library with random shapes; for property tests.
inline AdapterLibrary random_library(Rng& rng, std::size_t count, Dims dims, bool shared_a) {
    std::vector<std::pair<std::string, Matrix>> bs;
    std::vector<LoraAdapter> adapters;
    auto a = rng.gaussian(dims.r, dims.n);
    for (std::size_t i = 0; i < count; ++i) {
        auto b = rng.gaussian(dims.m, dims.r);
        if (shared_a) {
            bs.emplace_back("a" + std::to_string(i), std::move(b));
        } else {
            adapters.push_back(LoraAdapter{"a" + std::to_string(i), std::move(b),
                                           std::make_shared<const Matrix>(rng.gaussian(dims.r, dims.n))});
        }
    }
    return shared_a ? AdapterLibrary::with_shared_a(std::move(a), std::move(bs))
                    : AdapterLibrary::with_unique_a(std::move(adapters));
}

inline Dims random_dims(Rng& rng, std::size_t max_mn, std::size_t max_r) {
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
    };
    const std::size_t m = pick(1, max_mn);
    const std::size_t n = pick(1, max_mn);
    const std::size_t r = pick(1, std::min({max_r, m, n}));
    return Dims{m, n, r};
}

// Relative gap between the two largest scores (0 when fewer than two).
inline double top2_margin(const Scores& s) {
    if (s.size() < 2) return std::numeric_limits<double>::infinity();
    double a = -std::numeric_limits<double>::infinity(), b = a;
    for (double v : s) {
        if (v > a) {
            b = a;
            a = v;
        } else if (v > b) {
            b = v;
        }
    }
    return a == 0.0 ? 0.0 : (a - b) / std::abs(a);
}

inline CheckResult check_counterexample() {
    const auto lib = appendix_pair_library();
    const Vector x{1.0, 0.0};
    const auto arrows = build_arrow_forms(lib);
    const auto arrow = score_arrow(arrows, x);
    const auto naive = score_naive(lib, x);
    const std::size_t arrow_pick = select(arrow);
    const std::size_t naive_pick = select(naive);
    const bool ok = std::abs(arrow[0] - 1.0) <= 1e-12 && std::abs(arrow[1] - 1.0 / std::numbers::sqrt2) <= 1e-12 &&
                    std::abs(naive[0] - 2.0) <= 1e-12 && std::abs(naive[1] - std::sqrt(5.0)) <= 1e-12 &&
                    arrow_pick == 0 && naive_pick == 1;
    std::ostringstream os;
    os.precision(17);
    os << "arrow scores (" << arrow[0] << ", " << arrow[1] << ") winner " << arrow_pick << "; naive scores ("
       << naive[0] << ", " << naive[1] << ") winner " << naive_pick;
    return {"arrow_counterexample", ok, os.str()};
}

// Raw SpectR (and, on shared-A libraries, SEQR) scores equal naive norms.
inline CheckResult check_norm_equivalence(Method method, std::size_t trials, std::uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    std::size_t argmax_mismatch = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto dims = random_dims(rng, 32, 8);
        const std::size_t count = 2 + static_cast<std::size_t>(rng.uniform() * 6);
        const auto lib = random_library(rng, count, dims, method == Method::seqr || rng.uniform() < 0.5);
        const auto x = rng.gaussian(dims.n);
        const auto naive = score_naive(lib, x);
        const Scores got = method == Method::seqr ? score_seqr(lib, build_seqr_forms(lib), x).scores
                                                  : score_spectr(build_spectr_forms(lib), x);
        for (std::size_t i = 0; i < count; ++i) {
            worst = std::max(worst, std::abs(got[i] - naive[i]) / std::max(1.0, std::abs(naive[i])));
        }
        if (top2_margin(naive) > 1e-6 && select(got) != select(naive)) ++argmax_mismatch;
    }
    std::ostringstream os;
    os << trials << " trials, max relative score error " << worst << ", argmax mismatches " << argmax_mismatch;
    return {std::string(to_string(method)) + "_norm_equivalence", worst <= 1e-9 && argmax_mismatch == 0, os.str()};
}

// LAG winner lies in the Arrow top-k set and is the naive winner whenever the
// naive winner survives the filter; correctness is monotone in k.
inline CheckResult check_lag_properties(std::size_t trials, std::uint64_t seed) {
    Rng rng(seed);
    std::size_t violations = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto dims = random_dims(rng, 24, 6);
        const std::size_t count = 2 + static_cast<std::size_t>(rng.uniform() * 7);
        const auto lib = random_library(rng, count, dims, rng.uniform() < 0.5);
        const auto arrows = build_arrow_forms(lib);
        const auto spectr = build_spectr_forms(lib);
        const auto x = rng.gaussian(dims.n);
        const auto naive = score_naive(lib, x);
        const std::size_t truth = select(naive);
        const bool separable = top2_margin(naive) > 1e-6;
        bool was_correct = false;
        for (std::size_t k = 1; k <= count; ++k) {
            const auto d = route_lag(arrows, spectr, x, k);
            const auto keep = top_k(score_arrow(arrows, x), k);
            const bool in_set = std::ranges::find(keep, *d.selected) != keep.end();
            const bool truth_kept = std::ranges::find(keep, truth) != keep.end();
            const bool correct = *d.selected == truth;
            if (!in_set) ++violations;
            if (separable && truth_kept && !correct) ++violations;
            if (separable && was_correct && !correct) ++violations;
            was_correct = correct;
        }
    }
    std::ostringstream os;
    os << trials << " trials, violations " << violations;
    return {"lag_properties", violations == 0, os.str()};
}

inline CheckResult check_adversarial_generator(std::uint64_t seed) {
    AdversarialOptions opts;
    opts.seed = seed;
    opts.dims = Dims{8, 8, 4};
    const auto set = gen_arrow_adversarial(3, opts);
    const auto arrows = build_arrow_forms(set.synth.library);
    const auto seqr = build_seqr_forms(set.synth.library);
    std::size_t arrow_right = 0, seqr_right = 0;
    for (const auto& q : set.queries) {
        if (select(score_arrow(arrows, q.x)) == q.oracle_norm_winner) ++arrow_right;
        if (select(score_seqr(set.synth.library, seqr, q.x).scores) == q.oracle_norm_winner) ++seqr_right;
    }
    std::ostringstream os;
    os << set.queries.size() << " queries, arrow correct " << arrow_right << ", seqr correct " << seqr_right;
    return {"adversarial_generator", arrow_right == 0 && seqr_right == set.queries.size(), os.str()};
}

inline std::vector<CheckResult> run_verification(std::size_t trials, std::uint64_t seed) {
    return {
        check_counterexample(),
        check_norm_equivalence(Method::spectr, trials, derive_seed(seed, 1)),
        check_norm_equivalence(Method::seqr, trials, derive_seed(seed, 2)),
        check_lag_properties(trials, derive_seed(seed, 3)),
        check_adversarial_generator(derive_seed(seed, 4)),
    };
}

}  // namespace seqr
