#pragma once

// Routing cost models and measurement.
//
// FLOPs are multiply-accumulates with unit constants; square roots and
// comparisons are not counted. SEQR's shared z = A x (r·n MACs) is not part of
// its routing cost and is reported separately as per-query overhead.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ranges>
#include <sstream>
#include <string>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/errors.hpp"
#include "seqr/linalg.hpp"
#include "seqr/routing.hpp"
#include "seqr/synthgen.hpp"

namespace seqr {

struct CostParams {
    std::size_t n_adapters = 1000;
    Dims dims{4096, 4096, 8};
    std::size_t lag_k = 20;
};

inline void validate(const CostParams& p) {
    if (p.n_adapters == 0 || p.dims.m == 0 || p.dims.n == 0 || p.dims.r == 0 || p.lag_k == 0) {
        throw InvalidArgument("cost params must be positive");
    }
    if (p.lag_k > p.n_adapters) throw InvalidArgument("LAG k exceeds the number of adapters");
}

// Table-1 parameters: N = 1000, m = n = 4096, r = 8, k = 20.
inline CostParams table1_params() { return CostParams{1000, Dims{4096, 4096, 8}, 20}; }

inline const std::vector<Method>& cost_methods() {
    static const std::vector<Method> methods{Method::naive, Method::spectr, Method::lag, Method::arrow, Method::seqr};
    return methods;
}

inline std::uint64_t flops_model(Method method, const CostParams& p) {
    validate(p);
    const std::uint64_t big_n = p.n_adapters;
    const std::uint64_t m = p.dims.m, n = p.dims.n, r = p.dims.r, k = p.lag_k;
    switch (method) {
        case Method::naive: return big_n * r * (m + n);
        case Method::spectr: return big_n * r * n;
        case Method::lag: return big_n * n + k * r * n;
        case Method::arrow: return big_n * n;
        case Method::seqr: return big_n * r * r;
        case Method::mu: break;
    }
    throw ConfigError("no FLOP model for mu (it does not route)");
}

// Stored parameter count for routing. Shared A: r·n for A plus N·m·r for the
// B (or Q) matrices, with SEQR adding N·r² for R and Arrow adding N·n for the
// arrow vectors. SpectR and LAG keep a unique Â per adapter: N·r·(m + n).
inline std::uint64_t storage_model(Method method, const CostParams& p, bool shared_a) {
    validate(p);
    const std::uint64_t big_n = p.n_adapters;
    const std::uint64_t m = p.dims.m, n = p.dims.n, r = p.dims.r;
    const std::uint64_t unique = big_n * r * (m + n);
    const std::uint64_t base = shared_a ? r * n + big_n * m * r : unique;
    switch (method) {
        case Method::naive: return base;
        case Method::seqr: return base + big_n * r * r;
        case Method::arrow: return base + big_n * n;
        case Method::spectr:
        case Method::lag: return unique;
        case Method::mu: return base;
    }
    return base;
}

// Round to an integer count of the largest SI unit not exceeding the value:
// 65'536'000 -> "66M", 64'000 -> "64K".
inline std::string si_label(std::uint64_t value) {
    struct Unit {
        double scale;
        const char* suffix;
    };
    for (const Unit u : {Unit{1e12, "T"}, Unit{1e9, "G"}, Unit{1e6, "M"}, Unit{1e3, "K"}}) {
        if (static_cast<double>(value) >= u.scale) {
            return std::to_string(static_cast<std::uint64_t>(std::llround(static_cast<double>(value) / u.scale))) + u.suffix;
        }
    }
    return std::to_string(value);
}

// Round to `digits` significant figures.
inline double round_sig(double value, int digits) {
    if (value == 0.0) return 0.0;
    const double mag = std::pow(10.0, std::floor(std::log10(std::abs(value))) - digits + 1);
    return std::round(value / mag) * mag;
}

struct CostReport {
    Method method = Method::naive;
    std::uint64_t model_flops = 0;
    std::uint64_t measured_flops = 0;  // per query
    std::uint64_t overhead_flops = 0;  // per query, shared work outside routing (SEQR's A x)
    std::uint64_t storage_params = 0;
    std::int64_t wall_ns = 0;          // median per query
};

// Pool of distinct adapters and forms presented as `count` adapters by cycling.
// Scoring cost depends only on shapes, so a small pool measures the full
// library's cost without holding N copies in memory.
struct BenchLibrary {
    std::vector<LoraAdapter> adapters;
    std::shared_ptr<const Matrix> shared_a;  // null for unique-A pools
    std::vector<ArrowForm> arrow;
    std::vector<SpectrForm> spectr;
    std::vector<SeqrForm> seqr;
    std::size_t count = 0;

    template <class T>
    static auto cycled(const std::vector<T>& pool, std::size_t n) {
        return std::views::iota(std::size_t{0}, n) |
               std::views::transform([&pool](std::size_t i) { return std::cref(pool[i % pool.size()]); });
    }

    auto adapter_view() const { return cycled(adapters, count); }
    auto arrow_view() const { return cycled(arrow, count); }
    auto spectr_view() const { return cycled(spectr, count); }
    auto seqr_view() const { return cycled(seqr, count); }

    // Wrap a real library and whichever forms it has.
    static BenchLibrary from(const AdapterLibrary& lib, const RoutedForms& forms) {
        BenchLibrary b;
        b.adapters = lib.adapters();
        b.shared_a = lib.shared_a_ptr();
        if (forms.arrow) b.arrow = *forms.arrow;
        if (forms.spectr) b.spectr = *forms.spectr;
        if (forms.seqr) b.seqr = *forms.seqr;
        b.count = lib.size();
        return b;
    }
};

// Random pool with forms of the right shapes for cost measurement. Forms are
// shape-correct random matrices, not decompositions of the pool's adapters.
inline BenchLibrary synthetic_bench_library(const CostParams& p, std::size_t pool, std::uint64_t seed, bool shared_a = true) {
    validate(p);
    const auto [m, n, r] = p.dims;
    pool = std::max<std::size_t>(1, std::min(pool, p.n_adapters));
    Rng rng(seed);
    BenchLibrary b;
    b.count = p.n_adapters;
    if (shared_a) b.shared_a = std::make_shared<const Matrix>(rng.gaussian(r, n, 1.0 / static_cast<double>(r)));
    for (std::size_t i = 0; i < pool; ++i) {
        auto a = shared_a ? b.shared_a : std::make_shared<const Matrix>(rng.gaussian(r, n, 1.0 / static_cast<double>(r)));
        b.adapters.push_back(LoraAdapter{"pool" + std::to_string(i), rng.gaussian(m, r), a});
        b.arrow.push_back(ArrowForm{rng.unit(n)});
        b.spectr.push_back(SpectrForm{rng.gaussian(m, r), rng.gaussian(r, n)});
        Matrix upper = rng.gaussian(r, r);
        for (std::size_t row = 0; row < r; ++row)
            for (std::size_t col = 0; col < row; ++col) upper(row, col) = 0.0;
        b.seqr.push_back(SeqrForm{rng.gaussian(m, r), std::move(upper)});
    }
    return b;
}

struct MeasureOptions {
    int repetitions = 5;
};

// Instrumented routing of every query; MACs from the first pass, wall-clock as
// the median over repetitions. Preprocessing is not included.
inline CostReport measure(Method method, const BenchLibrary& lib, const std::vector<Vector>& queries,
                          const CostParams& p, bool shared_a, const MeasureOptions& opts = {}) {
    validate(p);
    if (queries.empty()) throw InvalidArgument("measure: need at least one query");
    if (opts.repetitions < 1) throw InvalidArgument("measure: repetitions must be >= 1");
    if (lib.count != p.n_adapters) throw DimensionError("measure: library size does not match cost params");
    auto require = [&](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("measure: missing ") + what + " forms for " + std::string(to_string(method)));
    };

    std::uint64_t overhead = 0;
    std::function<void(const Vector&)> run;
    switch (method) {
        case Method::naive:
            require(!lib.adapters.empty(), "adapter");
            run = [&](const Vector& x) { (void)score_naive(lib.adapter_view(), x); };
            break;
        case Method::arrow:
            require(!lib.arrow.empty(), "arrow");
            run = [&](const Vector& x) { (void)score_arrow(lib.arrow_view(), x); };
            break;
        case Method::spectr:
            require(!lib.spectr.empty(), "spectr");
            run = [&](const Vector& x) { (void)score_spectr(lib.spectr_view(), x); };
            break;
        case Method::lag:
            require(!lib.arrow.empty() && !lib.spectr.empty(), "arrow/spectr");
            run = [&](const Vector& x) { (void)route_lag(lib.arrow_view(), lib.spectr_view(), x, p.lag_k); };
            break;
        case Method::seqr:
            require(!lib.seqr.empty(), "seqr");
            if (!lib.shared_a) throw ConfigError("measure: SEQR requires a shared A");
            run = [&](const Vector& x) {
                Vector z(lib.shared_a->rows());
                {
                    MacCounter shared_work;
                    z = matvec(*lib.shared_a, x);
                    overhead += shared_work.count();
                }
                (void)select(score_seqr_from_z(lib.seqr_view(), z).scores);
            };
            break;
        case Method::mu:
            throw ConfigError("measure: mu does not route");
    }

    std::uint64_t macs = 0;
    {
        MacCounter counter;
        for (const auto& x : queries) run(x);
        macs = counter.count();
    }
    const std::uint64_t q = queries.size();

    std::vector<std::int64_t> times;
    for (int rep = 0; rep < opts.repetitions; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        for (const auto& x : queries) run(x);
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() / static_cast<std::int64_t>(q));
    }
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());

    CostReport rep;
    rep.method = method;
    rep.model_flops = flops_model(method, p);
    rep.measured_flops = macs / q;
    rep.overhead_flops = overhead / (q * (1 + static_cast<std::uint64_t>(opts.repetitions)));
    rep.storage_params = storage_model(method, p, shared_a);
    rep.wall_ns = times[times.size() / 2];
    return rep;
}

enum class SweepAxis { hidden_dim, num_adapters, rank };

inline std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::hidden_dim: return "hidden_dim";
        case SweepAxis::num_adapters: return "num_adapters";
        case SweepAxis::rank: return "rank";
    }
    return "unknown";
}

inline std::optional<SweepAxis> parse_axis(std::string_view s) {
    for (SweepAxis a : {SweepAxis::hidden_dim, SweepAxis::num_adapters, SweepAxis::rank})
        if (to_string(a) == s) return a;
    return std::nullopt;
}

// Default grids along each axis, with n = 4096, N = 1000, r = 8 held fixed.
inline std::vector<std::size_t> default_grid(SweepAxis a) {
    switch (a) {
        case SweepAxis::hidden_dim: return {512, 1024, 2048, 4096, 8192};
        case SweepAxis::num_adapters: return {10, 100, 1000, 10000};
        case SweepAxis::rank: return {8, 16, 32, 64, 128, 256};
    }
    return {};
}

struct SweepOptions {
    std::vector<Method> methods = cost_methods();
    std::size_t queries = 1;
    std::size_t pool = 2;
    std::uint64_t seed = 0;
    bool shared_a = true;
    MeasureOptions measure;
};

struct SweepRow {
    std::size_t axis_value = 0;
    CostReport report;
};

inline CostParams with_axis(CostParams p, SweepAxis axis, std::size_t value) {
    switch (axis) {
        case SweepAxis::hidden_dim: p.dims.m = value; p.dims.n = value; break;
        case SweepAxis::num_adapters: p.n_adapters = value; break;
        case SweepAxis::rank: p.dims.r = value; break;
    }
    p.lag_k = std::min(p.lag_k, p.n_adapters);
    return p;
}

inline std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<std::size_t>& grid, const CostParams& fixed,
                                   const SweepOptions& opts = {}) {
    if (grid.empty()) throw InvalidArgument("sweep: empty grid");
    for (std::size_t v : grid) validate(with_axis(fixed, axis, v));  // validate everything before allocating

    std::vector<SweepRow> rows;
    for (std::size_t v : grid) {
        const auto p = with_axis(fixed, axis, v);
        const auto lib = synthetic_bench_library(p, opts.pool, derive_seed(opts.seed, v), opts.shared_a);
        Rng rng(derive_seed(opts.seed, 7919 + v));
        std::vector<Vector> queries;
        for (std::size_t q = 0; q < std::max<std::size_t>(1, opts.queries); ++q) queries.push_back(rng.unit(p.dims.n));
        for (Method m : opts.methods) rows.push_back(SweepRow{v, measure(m, lib, queries, p, opts.shared_a, opts.measure)});
    }
    return rows;
}

inline std::string sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << to_string(axis) << ",method,model_flops,measured_flops,storage_params,wall_ns,overhead_flops\n";
    for (const auto& row : rows) {
        const auto& r = row.report;
        os << row.axis_value << ',' << to_string(r.method) << ',' << r.model_flops << ',' << r.measured_flops << ','
           << r.storage_params << ',' << r.wall_ns << ',' << r.overhead_flops << '\n';
    }
    return os.str();
}

}  // namespace seqr
