#pragma once

// Deterministic synthetic adapter libraries and labelled query workloads.
//
// Every adapter is built in the coordinates w = V_Aᵀ x of its A's row space
// (A = U_A S_A V_Aᵀ): choosing B = M · K · S_A⁻¹ · U_Aᵀ with M orthonormal gives
// B·A·x = M · K · w, so ‖B A x‖ = ‖K w‖ and the r x r matrix K alone fixes the
// adapter's behaviour.
//
//   task adapter:   K = I + (g - 1) E Eᵀ, E an r x d orthonormal task basis
//   adversarial:    K = P C Pᵀ or P D Pᵀ for a plane P (r x 2) and the 2x2
//                   pair C = diag(2, 1), D = I · diag(3, 1) · [v1 v2]ᵀ with
//                   v1 = (1, 1)/√2, v2 = (1, -1)/√2, on which Arrow's rank-1
//                   prototype and the true activation norm disagree.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/errors.hpp"
#include "seqr/io.hpp"
#include "seqr/linalg.hpp"
#include "seqr/routing.hpp"

namespace seqr {

inline constexpr const char* kGeneratorName = "mt19937_64+box-muller";

// mt19937_64 has a fully specified output sequence; uniforms and normals are
// derived here rather than through <random> distributions, whose algorithms
// are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    Matrix gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0) {
        Matrix m(rows, cols);
        for (double& v : m.values()) v = stddev * normal();
        return m;
    }

    Vector gaussian(std::size_t dim) {
        Vector v(dim);
        for (double& x : v.values()) x = normal();
        return v;
    }

    Vector unit(std::size_t dim) {
        for (;;) {
            auto v = gaussian(dim);
            const double nrm = norm2(v);
            if (nrm > 1e-12) return scaled(v, 1.0 / nrm);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// splitmix64 finalizer: derives independent sub-stream seeds from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t n_adapters = 10;  // including adversarial adapters
    Dims dims{64, 64, 8};
    bool shared_a = true;
    std::size_t task_subspace_dim = 1;
    double signal_gain = 4.0;
    double noise_level = 0.1;
    std::vector<double> bias_scales;    // empty: all 1
    std::size_t adversarial_pairs = 0;  // the last 2 * pairs adapters form (C, D) pairs

    std::size_t task_adapters() const noexcept { return n_adapters - 2 * adversarial_pairs; }
};

inline void validate(const SynthSpec& spec) {
    const auto& [m, n, r] = spec.dims;
    if (spec.n_adapters == 0) throw InvalidArgument("synth: need at least one adapter");
    if (m == 0 || n == 0 || r == 0) throw InvalidArgument("synth: dimensions must be positive");
    if (r > m || r > n) throw InvalidArgument("synth: rank must not exceed m or n");
    if (spec.task_subspace_dim == 0) throw InvalidArgument("synth: task subspace dim must be positive");
    if (spec.task_subspace_dim > n) throw InvalidArgument("synth: task subspace dim exceeds n");
    if (!(spec.signal_gain > 1.0) || !std::isfinite(spec.signal_gain)) throw InvalidArgument("synth: signal gain must be > 1");
    if (!(spec.noise_level >= 0.0) || !std::isfinite(spec.noise_level)) throw InvalidArgument("synth: noise level must be >= 0");
    if (2 * spec.adversarial_pairs > spec.n_adapters) throw InvalidArgument("synth: too many adversarial pairs");
    if (spec.adversarial_pairs > 0 && r < 2) throw InvalidArgument("synth: adversarial pairs need rank >= 2");
    if (!spec.bias_scales.empty()) {
        if (spec.bias_scales.size() != spec.n_adapters) throw InvalidArgument("synth: bias_scales length must equal N");
        for (double s : spec.bias_scales)
            if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("synth: bias scales must be positive");
    }
}

// Generated library plus the geometry the query generator needs.
struct SynthLibrary {
    AdapterLibrary library;
    // Per adapter: orthonormal n x d basis of the directions it amplifies. For
    // adversarial adapters, the n x 2 plane carrying the (C, D) pattern.
    std::vector<Matrix> task_bases;
    std::vector<bool> adversarial;
    std::vector<std::size_t> partner;  // adversarial: index of the pair's other member
};

struct LabeledQuery {
    Vector x;
    std::size_t task = 0;
    std::size_t oracle_norm_winner = 0;
};

namespace detail {

inline Matrix orthonormal_columns(Rng& rng, std::size_t rows, std::size_t cols) {
    return reduced_qr(rng.gaussian(rows, cols)).q;
}

inline Matrix column_block(const Matrix& m, std::size_t first, std::size_t count) {
    Matrix out(m.rows(), count);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, first + j);
    return out;
}

// The 2x2 pair: C = diag(2, 1); D = diag(3, 1) · [v1 v2]ᵀ.
inline Matrix pair_matrix_c() { return Matrix::from_rows({{2.0, 0.0}, {0.0, 1.0}}); }

inline Matrix pair_matrix_d() {
    const double h = 1.0 / std::numbers::sqrt2;
    return Matrix::from_rows({{3.0 * h, 3.0 * h}, {h, -h}});
}

// Row-space frame of A: A = U S Vᵀ, with the right factor of the adapter
// construction pre-multiplied: S⁻¹ Uᵀ.
struct RowFrame {
    Matrix v;            // n x r
    Matrix s_inv_ut;     // r x r
};

inline RowFrame row_frame(const Matrix& a) {
    const auto svd = thin_svd(a);  // a is r x n, so u is r x r, v is n x r
    const std::size_t r = a.rows();
    if (svd.s[r - 1] <= 1e-12 * svd.s[0]) throw InvalidArgument("synth: drawn A is rank deficient");
    Matrix s_inv_ut(r, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) s_inv_ut(i, j) = svd.u(j, i) / svd.s[i];
    return RowFrame{svd.v, std::move(s_inv_ut)};
}

inline double max_principal_cosine(const Matrix& a, const Matrix& b) {
    return thin_svd(matmul(transpose(a), b)).s[0];
}

}  // namespace detail

inline SynthLibrary gen_library(const SynthSpec& spec) {
    validate(spec);
    const auto [m, n, r] = spec.dims;
    const std::size_t total = spec.n_adapters;
    const std::size_t tasks = spec.task_adapters();
    const std::size_t pairs = spec.adversarial_pairs;
    Rng rng(spec.seed);

    AdapterLibrary::Meta meta;
    meta["generator"] = kGeneratorName;
    meta["seed"] = std::to_string(spec.seed);
    {
        std::ostringstream os;
        os.precision(17);
        os << "N=" << total << " m=" << m << " n=" << n << " r=" << r << " shared_a=" << spec.shared_a
           << " d=" << spec.task_subspace_dim << " gain=" << spec.signal_gain << " noise=" << spec.noise_level
           << " pairs=" << pairs;
        meta["synth.spec"] = os.str();
    }

    std::size_t d = spec.task_subspace_dim;
    if (d > r) {
        meta["warning.task_dim"] = "task subspace dim " + std::to_string(d) + " clamped to rank " + std::to_string(r);
        d = r;
    }

    // Frames: one shared, or one per task adapter and one per adversarial pair.
    std::vector<Matrix> a_mats;
    std::vector<detail::RowFrame> frames;
    auto draw_frame = [&]() {
        a_mats.push_back(rng.gaussian(r, n, 1.0 / static_cast<double>(r)));
        frames.push_back(detail::row_frame(a_mats.back()));
    };
    if (spec.shared_a) draw_frame();

    // Coordinate subspaces in R^r: jointly orthogonal when they fit, else independent.
    const std::size_t needed = tasks * d + 2 * pairs;
    const bool packed = spec.shared_a && needed <= r;
    std::vector<Matrix> coord_bases;
    if (packed) {
        const auto joint = detail::orthonormal_columns(rng, r, needed);
        for (std::size_t i = 0; i < tasks; ++i) coord_bases.push_back(detail::column_block(joint, i * d, d));
        for (std::size_t p = 0; p < pairs; ++p) coord_bases.push_back(detail::column_block(joint, tasks * d + 2 * p, 2));
    } else {
        for (std::size_t i = 0; i < tasks; ++i) coord_bases.push_back(detail::orthonormal_columns(rng, r, d));
        for (std::size_t p = 0; p < pairs; ++p) coord_bases.push_back(detail::orthonormal_columns(rng, r, 2));
        if (spec.shared_a) {
            meta["warning.packing"] = "N*d + 2*pairs = " + std::to_string(needed) + " exceeds rank " +
                                      std::to_string(r) + "; task subspaces drawn independently";
        }
    }

    std::vector<Matrix> task_bases;
    std::vector<bool> adversarial;
    std::vector<std::size_t> partner;
    std::vector<std::pair<std::string, Matrix>> shared_bs;
    std::vector<LoraAdapter> unique_adapters;

    auto scale_of = [&](std::size_t i) { return spec.bias_scales.empty() ? 1.0 : spec.bias_scales[i]; };
    auto emit = [&](std::size_t i, const Matrix& k, std::size_t frame_idx, const std::string& id) {
        const auto& frame = frames[frame_idx];
        const auto mix = detail::orthonormal_columns(rng, m, r);
        Matrix b = scaled(matmul(matmul(mix, k), frame.s_inv_ut), scale_of(i));
        if (spec.shared_a) {
            shared_bs.emplace_back(id, std::move(b));
        } else {
            unique_adapters.push_back(LoraAdapter{id, std::move(b), std::make_shared<const Matrix>(a_mats[frame_idx])});
        }
    };

    for (std::size_t i = 0; i < tasks; ++i) {
        if (!spec.shared_a) draw_frame();
        const std::size_t fi = frames.size() - 1;
        const auto& e = coord_bases[i];
        Matrix k = Matrix::identity(r);
        const auto eet = matmul(e, transpose(e));
        for (std::size_t a = 0; a < r; ++a)
            for (std::size_t b = 0; b < r; ++b) k(a, b) += (spec.signal_gain - 1.0) * eet(a, b);
        emit(i, k, fi, "task" + std::to_string(i));
        task_bases.push_back(matmul(frames[fi].v, e));
        adversarial.push_back(false);
        partner.push_back(i);
    }
    for (std::size_t p = 0; p < pairs; ++p) {
        if (!spec.shared_a) draw_frame();
        const std::size_t fi = frames.size() - 1;
        const auto& plane = coord_bases[tasks + p];
        const std::size_t ci = tasks + 2 * p;
        const auto plane_t = transpose(plane);
        emit(ci, matmul(matmul(plane, detail::pair_matrix_c()), plane_t), fi, "pair" + std::to_string(p) + "_c");
        emit(ci + 1, matmul(matmul(plane, detail::pair_matrix_d()), plane_t), fi, "pair" + std::to_string(p) + "_d");
        const auto basis = matmul(frames[fi].v, plane);
        for (int t = 0; t < 2; ++t) {
            task_bases.push_back(basis);
            adversarial.push_back(true);
        }
        partner.push_back(ci + 1);
        partner.push_back(ci);
    }

    double coherence = 0.0;
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t j = i + 1; j < total; ++j)
            if (partner[i] != j) coherence = std::max(coherence, detail::max_principal_cosine(task_bases[i], task_bases[j]));
    {
        std::ostringstream os;
        os.precision(6);
        os << coherence;
        meta["coherence.max_cosine"] = os.str();
    }

    auto library = spec.shared_a
                       ? AdapterLibrary::with_shared_a(std::move(a_mats.front()), std::move(shared_bs), std::move(meta))
                       : AdapterLibrary::with_unique_a(std::move(unique_adapters), std::move(meta));
    return SynthLibrary{std::move(library), std::move(task_bases), std::move(adversarial), std::move(partner)};
}

// Largest angle (exclusive) inside an adversarial plane for which Arrow still
// prefers C while the true norm prefers D is 22.5 degrees; queries stay below 20.
inline constexpr double kAdversarialMaxAngle = 20.0 * std::numbers::pi / 180.0;

// `per_task` queries per adapter. Task adapters: unit-normalized (in-subspace
// signal + noise_level * isotropic noise). Adversarial pairs: per_task noise-free
// queries inside the pair's plane, labelled with the pair's D adapter.
// `stream` selects an independent query stream (e.g. calibration vs evaluation).
inline std::vector<LabeledQuery> gen_queries(const SynthLibrary& synth, const SynthSpec& spec, std::size_t per_task,
                                             std::uint64_t stream = 0) {
    Rng rng(derive_seed(spec.seed, stream));
    const std::size_t n = synth.library.dims().n;
    std::vector<LabeledQuery> out;
    out.reserve(per_task * synth.library.size());

    for (std::size_t i = 0; i < synth.library.size(); ++i) {
        const auto& basis = synth.task_bases[i];
        if (synth.adversarial[i]) {
            const std::size_t c = std::min(i, synth.partner[i]);
            if (i != c) continue;  // one batch per pair
            for (std::size_t q = 0; q < per_task; ++q) {
                const double t = kAdversarialMaxAngle * static_cast<double>(q) / static_cast<double>(per_task);
                Vector x = add(scaled(basis.column(0), std::cos(t)), scaled(basis.column(1), std::sin(t)));
                out.push_back(LabeledQuery{std::move(x), synth.partner[i], 0});
            }
            continue;
        }
        for (std::size_t q = 0; q < per_task; ++q) {
            const auto coeff = rng.unit(basis.cols());
            Vector signal = matvec(basis, coeff);
            Vector noise = scaled(rng.gaussian(n), 1.0 / std::sqrt(static_cast<double>(n)));
            Vector x = add(signal, scaled(noise, spec.noise_level));
            const double nrm = norm2(x);
            x = nrm > 0.0 ? scaled(x, 1.0 / nrm) : signal;
            out.push_back(LabeledQuery{std::move(x), i, 0});
        }
    }
    for (auto& q : out) q.oracle_norm_winner = select(score_naive(synth.library, q.x));
    return out;
}

struct AdversarialOptions {
    std::uint64_t seed = 0;
    Dims dims{8, 8, 4};
    bool shared_a = true;
    std::size_t per_pair = 8;
};

struct AdversarialSet {
    SynthLibrary synth;
    std::vector<LabeledQuery> queries;
};

// `count` (C, D) pairs embedded in random planes of the adapters' row space.
// Pairs beyond the rank's capacity for orthogonal planes reuse planes; Arrow
// still picks a C and the norm still prefers a D on every query.
inline AdversarialSet gen_arrow_adversarial(std::size_t count, const AdversarialOptions& opts = {}) {
    if (count == 0) throw InvalidArgument("gen_arrow_adversarial: count must be >= 1");
    const auto [m, n, r] = opts.dims;
    if (r < 2 || r > m || r > n) throw InvalidArgument("gen_arrow_adversarial: need 2 <= r <= min(m, n)");

    const std::size_t capacity = opts.shared_a ? r / 2 : count;
    SynthSpec spec;
    spec.seed = opts.seed;
    spec.dims = opts.dims;
    spec.shared_a = opts.shared_a;
    spec.n_adapters = 2 * std::min(count, capacity);
    spec.adversarial_pairs = std::min(count, capacity);
    auto base = gen_library(spec);
    if (count <= capacity) {
        auto queries = gen_queries(base, spec, opts.per_pair);
        return AdversarialSet{std::move(base), std::move(queries)};
    }

    // Reuse planes cyclically with per-pair scales.
    Rng rng(derive_seed(opts.seed, 1000));
    std::vector<std::pair<std::string, Matrix>> bs;
    SynthLibrary synth{base.library, {}, {}, {}};
    for (std::size_t p = 0; p < count; ++p) {
        const std::size_t src = 2 * (p % capacity);
        const double scale = 0.5 + 1.5 * rng.uniform();
        for (int t = 0; t < 2; ++t) {
            bs.emplace_back("pair" + std::to_string(p) + (t == 0 ? "_c" : "_d"), scaled(base.library[src + t].b, scale));
            synth.task_bases.push_back(base.task_bases[src + t]);
            synth.adversarial.push_back(true);
            synth.partner.push_back(2 * p + (t == 0 ? 1 : 0));
        }
    }
    auto meta = base.library.meta();
    meta["adversarial.pairs"] = std::to_string(count);
    synth.library = AdapterLibrary::with_shared_a(base.library.shared_a(), std::move(bs), std::move(meta));
    spec.n_adapters = 2 * count;
    spec.adversarial_pairs = count;
    auto queries = gen_queries(synth, spec, opts.per_pair);
    return AdversarialSet{std::move(synth), std::move(queries)};
}

// The literal 2x2 counterexample: adapters C and D with A = I, input x = (1, 0).
inline AdapterLibrary appendix_pair_library() {
    return AdapterLibrary::with_shared_a(Matrix::identity(2), {{"C", detail::pair_matrix_c()}, {"D", detail::pair_matrix_d()}},
                                         {{"origin", "arrow counterexample"}});
}

// ---------------------------------------------------------------------------
// Query file: u32 count, u32 n, then per query u32 task, u32 oracle winner, n f64.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_queries(const std::vector<LabeledQuery>& queries) {
    io::ByteWriter w;
    const std::size_t n = queries.empty() ? 0 : queries.front().x.dim();
    w.u32(static_cast<std::uint32_t>(queries.size()));
    w.u32(static_cast<std::uint32_t>(n));
    for (const auto& q : queries) {
        if (q.x.dim() != n) throw DimensionError("encode_queries: mixed query dims");
        w.u32(static_cast<std::uint32_t>(q.task));
        w.u32(static_cast<std::uint32_t>(q.oracle_norm_winner));
        w.f64s(q.x.values());
    }
    return std::move(w.bytes());
}

inline std::vector<LabeledQuery> decode_queries(std::span<const std::uint8_t> bytes) {
    io::ByteReader rd(bytes);
    const std::size_t count = rd.u32();
    const std::size_t n = rd.u32();
    if (count > 0 && n == 0) throw LoadError(LoadErrorKind::DimensionInconsistent, "queries with zero dimension");
    if (n > 0 && count > rd.remaining() / (8 + 8 * n)) throw LoadError(LoadErrorKind::Truncated, "query file shorter than header claims");
    std::vector<LabeledQuery> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        LabeledQuery q{Vector(n), 0, 0};
        q.task = rd.u32();
        q.oracle_norm_winner = rd.u32();
        auto values = rd.f64s(n);
        try {
            q.x = Vector(std::move(values));
        } catch (const InvalidArgument& e) {
            throw LoadError(LoadErrorKind::DimensionInconsistent, e.what());
        }
        out.push_back(std::move(q));
    }
    if (rd.remaining() != 0) throw LoadError(LoadErrorKind::DimensionInconsistent, "trailing bytes in query file");
    return out;
}

inline void save_queries(const std::filesystem::path& path, const std::vector<LabeledQuery>& queries) {
    io::write_file_atomic(path, encode_queries(queries));
}

inline std::vector<LabeledQuery> load_queries(const std::filesystem::path& path) {
    return decode_queries(io::read_file(path));
}

// Group queries by task label into per-adapter calibration samples.
inline std::vector<std::vector<Vector>> samples_by_task(const std::vector<LabeledQuery>& queries, std::size_t n_adapters) {
    std::vector<std::vector<Vector>> out(n_adapters);
    for (const auto& q : queries) {
        if (q.task >= n_adapters) throw DimensionError("query task label " + std::to_string(q.task) + " out of range");
        out[q.task].push_back(q.x);
    }
    return out;
}

}  // namespace seqr
