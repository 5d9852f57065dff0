#pragma once

// LoRA adapter libraries and their per-method routed forms.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "seqr/errors.hpp"
#include "seqr/linalg.hpp"

namespace seqr {

struct Dims {
    std::size_t m = 0;  // output dimension (rows of B)
    std::size_t n = 0;  // input dimension (cols of A)
    std::size_t r = 0;  // adapter rank

    bool operator==(const Dims&) const = default;
};

// One low-rank update B·A. `a` is either owned by this adapter or aliases the
// library's shared A.
struct LoraAdapter {
    std::string id;
    Matrix b;                          // m x r, α/r scaling already folded in
    std::shared_ptr<const Matrix> a;  // r x n

    std::size_t rank() const noexcept { return b.cols(); }
    Matrix product() const { return matmul(b, *a); }
};

// Scale B by α/r, the conventional LoRA output scaling, so routing sees the
// update exactly as applied.
inline Matrix fold_lora_scaling(const Matrix& b, double alpha) {
    return scaled(b, alpha / static_cast<double>(b.cols()));
}

class AdapterLibrary {
public:
    using Meta = std::map<std::string, std::string>;

    // Library whose adapters all reference one frozen A.
    static AdapterLibrary with_shared_a(Matrix shared_a, std::vector<std::pair<std::string, Matrix>> bs,
                                        Meta meta = {}) {
        auto a = std::make_shared<const Matrix>(std::move(shared_a));
        std::vector<LoraAdapter> adapters;
        adapters.reserve(bs.size());
        for (auto& [id, b] : bs) adapters.push_back(LoraAdapter{std::move(id), std::move(b), a});
        return AdapterLibrary(std::move(adapters), a, std::move(meta));
    }

    // Library where each adapter owns its A (several may still alias one matrix).
    static AdapterLibrary with_unique_a(std::vector<LoraAdapter> adapters, Meta meta = {}) {
        return AdapterLibrary(std::move(adapters), nullptr, std::move(meta));
    }

    std::size_t size() const noexcept { return adapters_.size(); }
    const Dims& dims() const noexcept { return dims_; }
    bool has_shared_a() const noexcept { return shared_a_ != nullptr; }

    const Matrix& shared_a() const {
        if (!shared_a_) throw ConfigError("library has no shared A matrix");
        return *shared_a_;
    }
    const std::shared_ptr<const Matrix>& shared_a_ptr() const noexcept { return shared_a_; }

    const std::vector<LoraAdapter>& adapters() const noexcept { return adapters_; }
    const LoraAdapter& operator[](std::size_t i) const { return adapters_.at(i); }

    const Meta& meta() const noexcept { return meta_; }
    Meta& meta() noexcept { return meta_; }

private:
    AdapterLibrary(std::vector<LoraAdapter> adapters, std::shared_ptr<const Matrix> shared_a, Meta meta)
        : adapters_(std::move(adapters)), shared_a_(std::move(shared_a)), meta_(std::move(meta)) {
        if (adapters_.empty()) throw InvalidArgument("adapter library must contain at least one adapter");
        const auto& first = adapters_.front();
        if (!first.a) throw InvalidArgument("adapter '" + first.id + "' has no A matrix");
        dims_ = Dims{first.b.rows(), first.a->cols(), first.b.cols()};
        if (dims_.r > dims_.m || dims_.r > dims_.n) {
            throw DimensionError("adapter rank " + std::to_string(dims_.r) + " exceeds min(m, n)");
        }
        std::set<std::string> ids;
        for (const auto& ad : adapters_) {
            if (!ad.a) throw InvalidArgument("adapter '" + ad.id + "' has no A matrix");
            if (ad.b.rows() != dims_.m || ad.b.cols() != dims_.r || ad.a->rows() != dims_.r ||
                ad.a->cols() != dims_.n) {
                throw DimensionError("adapter '" + ad.id + "' does not match library dims");
            }
            if (shared_a_ && ad.a != shared_a_) {
                throw ConfigError("adapter '" + ad.id + "' does not reference the shared A");
            }
            if (!ids.insert(ad.id).second) throw InvalidArgument("duplicate adapter id '" + ad.id + "'");
        }
    }

    std::vector<LoraAdapter> adapters_;
    std::shared_ptr<const Matrix> shared_a_;
    Meta meta_;
    Dims dims_;
};

// ---------------------------------------------------------------------------
// Routed forms
// ---------------------------------------------------------------------------

// Unit right singular vector of B·A for the largest singular value.
struct ArrowForm {
    Vector v;
    bool operator==(const ArrowForm&) const = default;
};

// B·A = b_hat · a_hat with b_hat = U (orthonormal columns) and a_hat = S·Vᵀ.
struct SpectrForm {
    Matrix b_hat;
    Matrix a_hat;
    bool operator==(const SpectrForm&) const = default;
};

// B = q · r_mat, reduced QR.
struct SeqrForm {
    Matrix q;
    Matrix r_mat;
    bool operator==(const SeqrForm&) const = default;
};

namespace detail {

// Thin SVD of B·A with rank budget r, computed through B = QR so only the
// r x n factor R·A is decomposed: B·A = Q·(U' S Vᵀ) = (Q U') S Vᵀ.
inline ThinSvd product_svd(const LoraAdapter& adapter) {
    const auto qr = reduced_qr(adapter.b);
    const auto core = thin_svd(matmul(qr.r, *adapter.a), adapter.rank());
    return ThinSvd{matmul(qr.q, core.u), core.s, core.v};
}

}  // namespace detail

inline ArrowForm build_arrow(const LoraAdapter& adapter) {
    const auto svd = detail::product_svd(adapter);
    if (svd.s[0] == 0.0) {
        throw InvalidArgument("build_arrow: adapter '" + adapter.id + "' is zero (no principal direction)");
    }
    return ArrowForm{svd.v.column(0)};
}

inline SpectrForm build_spectr(const LoraAdapter& adapter) {
    auto svd = detail::product_svd(adapter);
    Matrix a_hat = transpose(svd.v);
    for (std::size_t k = 0; k < a_hat.rows(); ++k)
        for (double& x : a_hat.row(k)) x *= svd.s[k];
    return SpectrForm{std::move(svd.u), std::move(a_hat)};
}

inline SeqrForm build_seqr(const AdapterLibrary& lib, std::size_t index) {
    if (!lib.has_shared_a()) {
        throw ConfigError("SEQR requires a library whose adapters share a single frozen A matrix");
    }
    auto qr = reduced_qr(lib[index].b);
    return SeqrForm{std::move(qr.q), std::move(qr.r)};
}

inline std::vector<ArrowForm> build_arrow_forms(const AdapterLibrary& lib) {
    std::vector<ArrowForm> out;
    out.reserve(lib.size());
    for (const auto& ad : lib.adapters()) out.push_back(build_arrow(ad));
    return out;
}

inline std::vector<SpectrForm> build_spectr_forms(const AdapterLibrary& lib) {
    std::vector<SpectrForm> out;
    out.reserve(lib.size());
    for (const auto& ad : lib.adapters()) out.push_back(build_spectr(ad));
    return out;
}

inline std::vector<SeqrForm> build_seqr_forms(const AdapterLibrary& lib) {
    if (!lib.has_shared_a()) {
        throw ConfigError("SEQR requires a library whose adapters share a single frozen A matrix");
    }
    std::vector<SeqrForm> out;
    out.reserve(lib.size());
    for (std::size_t i = 0; i < lib.size(); ++i) out.push_back(build_seqr(lib, i));
    return out;
}

// Per-adapter (μ, σ) of raw activation-norm scores.
struct CalibrationStats {
    std::vector<double> mu;
    std::vector<double> sigma;

    std::size_t size() const noexcept { return mu.size(); }
    bool operator==(const CalibrationStats&) const = default;

    static CalibrationStats identity(std::size_t n) {
        return CalibrationStats{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
    }
};

// Everything that may accompany a library on disk.
struct RoutedForms {
    std::optional<std::vector<ArrowForm>> arrow;
    std::optional<std::vector<SpectrForm>> spectr;
    std::optional<std::vector<SeqrForm>> seqr;
    std::optional<CalibrationStats> stats;

    bool operator==(const RoutedForms&) const = default;
};

}  // namespace seqr
