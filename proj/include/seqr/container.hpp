#pragma once

// SQRL library container.
//
//   "SQRL" 0x01
//   u32 N, u32 m, u32 n, u32 r
//   u8 shared_a, u8 forms, u8 discard_b, u8 reserved (= 0)
//   [shared A, r*n f64]                                 if shared_a
//   per adapter:
//     u16 id length, id bytes (UTF-8)
//     [B m*r f64, then A r*n f64 when A is not shared]  forms bit0
//     [v n f64]                                         forms bit1
//     [b_hat m*r f64, a_hat r*n f64]                    forms bit2
//     [q m*r f64, r_mat r*r f64]                        forms bit3
//     [mu f64, sigma f64]                               forms bit4
//   u32 metadata count, then per entry u16 key length, key, u32 value length, value
//   u32 CRC-32 of every preceding byte
//
// All integers and f64 little-endian; matrices row-major.

#include <zlib.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "seqr/adapter.hpp"
#include "seqr/errors.hpp"
#include "seqr/io.hpp"

namespace seqr {

namespace container {
inline constexpr std::array<char, 4> kMagic{'S', 'Q', 'R', 'L'};
inline constexpr std::uint8_t kVersion = 0x01;

enum FormBits : std::uint8_t {
    kRawB = 1u << 0,
    kArrow = 1u << 1,
    kSpectr = 1u << 2,
    kSeqr = 1u << 3,
    kCalibration = 1u << 4,
};

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes a uInt length; feed in chunks.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, std::numeric_limits<uInt>::max());
        crc = ::crc32(crc, bytes.data() + offset, static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}
}  // namespace container

struct LoadedLibrary {
    AdapterLibrary library;
    RoutedForms forms;
    bool discard_b = false;
};

namespace detail {

inline void check_form_count(std::size_t have, std::size_t want, const char* name) {
    if (have != want) {
        throw DimensionError(std::string("save_library: ") + name + " forms count " + std::to_string(have) +
                             " != library size " + std::to_string(want));
    }
}

inline void write_matrix(io::ByteWriter& w, const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw DimensionError(std::string("save_library: ") + what + " has wrong shape");
    }
    w.f64s(m.values());
}

inline Matrix read_matrix(io::ByteReader& rd, std::size_t rows, std::size_t cols) {
    if (rows != 0 && cols > std::numeric_limits<std::size_t>::max() / rows) {
        throw LoadError(LoadErrorKind::DimensionInconsistent, "matrix size overflows");
    }
    auto data = rd.f64s(rows * cols);
    try {
        return Matrix(rows, cols, std::move(data));
    } catch (const InvalidArgument& e) {
        throw LoadError(LoadErrorKind::DimensionInconsistent, e.what());
    }
}

}  // namespace detail

// Serialize a library plus any accompanying forms. With `discard_b`, raw B
// matrices are omitted and rebuilt from the SEQR factors on load.
inline std::vector<std::uint8_t> encode_library(const AdapterLibrary& lib, const RoutedForms& forms = {},
                                                bool discard_b = false) {
    using namespace container;
    const auto [m, n, r] = lib.dims();
    const std::size_t count = lib.size();
    for (std::size_t v : {count, m, n, r}) {
        if (v > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("save_library: dimension exceeds u32");
    }
    if (discard_b && !forms.seqr) throw ConfigError("discard-B requires SEQR forms to be stored");
    if (discard_b && !lib.has_shared_a()) throw ConfigError("discard-B requires a shared-A library");

    std::uint8_t bits = discard_b ? 0 : kRawB;
    if (forms.arrow) {
        detail::check_form_count(forms.arrow->size(), count, "arrow");
        bits |= kArrow;
    }
    if (forms.spectr) {
        detail::check_form_count(forms.spectr->size(), count, "spectr");
        bits |= kSpectr;
    }
    if (forms.seqr) {
        detail::check_form_count(forms.seqr->size(), count, "seqr");
        bits |= kSeqr;
    }
    if (forms.stats) {
        detail::check_form_count(forms.stats->mu.size(), count, "calibration mu");
        detail::check_form_count(forms.stats->sigma.size(), count, "calibration sigma");
        bits |= kCalibration;
    }

    io::ByteWriter w;
    w.raw(std::string_view(kMagic.data(), kMagic.size()));
    w.u8(kVersion);
    w.u32(static_cast<std::uint32_t>(count));
    w.u32(static_cast<std::uint32_t>(m));
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(r));
    w.u8(lib.has_shared_a() ? 1 : 0);
    w.u8(bits);
    w.u8(discard_b ? 1 : 0);
    w.u8(0);
    if (lib.has_shared_a()) w.f64s(lib.shared_a().values());

    for (std::size_t i = 0; i < count; ++i) {
        const auto& ad = lib[i];
        if (ad.id.size() > std::numeric_limits<std::uint16_t>::max()) throw DimensionError("adapter id too long");
        w.u16(static_cast<std::uint16_t>(ad.id.size()));
        w.raw(ad.id);
        if (bits & kRawB) {
            w.f64s(ad.b.values());
            if (!lib.has_shared_a()) w.f64s(ad.a->values());
        }
        if (bits & kArrow) {
            const auto& v = (*forms.arrow)[i].v;
            if (v.dim() != n) throw DimensionError("save_library: arrow vector has wrong dim");
            w.f64s(v.values());
        }
        if (bits & kSpectr) {
            detail::write_matrix(w, (*forms.spectr)[i].b_hat, m, r, "b_hat");
            detail::write_matrix(w, (*forms.spectr)[i].a_hat, r, n, "a_hat");
        }
        if (bits & kSeqr) {
            detail::write_matrix(w, (*forms.seqr)[i].q, m, r, "q");
            detail::write_matrix(w, (*forms.seqr)[i].r_mat, r, r, "r_mat");
        }
        if (bits & kCalibration) {
            w.f64(forms.stats->mu[i]);
            w.f64(forms.stats->sigma[i]);
        }
    }

    w.u32(static_cast<std::uint32_t>(lib.meta().size()));
    for (const auto& [key, value] : lib.meta()) {
        if (key.size() > std::numeric_limits<std::uint16_t>::max()) throw DimensionError("metadata key too long");
        w.u16(static_cast<std::uint16_t>(key.size()));
        w.raw(key);
        w.u32(static_cast<std::uint32_t>(value.size()));
        w.raw(value);
    }

    w.u32(crc32_of(w.bytes()));
    return std::move(w.bytes());
}

inline LoadedLibrary decode_library(std::span<const std::uint8_t> bytes) {
    using namespace container;
    io::ByteReader rd(bytes);

    if (!rd.has(kMagic.size())) throw LoadError(LoadErrorKind::Truncated, "file shorter than magic");
    const auto magic = rd.str(kMagic.size());
    if (magic != std::string_view(kMagic.data(), kMagic.size())) {
        throw LoadError(LoadErrorKind::BadMagic, "expected \"SQRL\"");
    }
    const std::uint8_t version = rd.u8();
    if (version != kVersion) {
        throw LoadError(LoadErrorKind::VersionMismatch, "version " + std::to_string(version) + ", expected 1");
    }
    const std::size_t count = rd.u32();
    const std::size_t m = rd.u32();
    const std::size_t n = rd.u32();
    const std::size_t r = rd.u32();
    const std::uint8_t shared_flag = rd.u8();
    const std::uint8_t bits = rd.u8();
    const std::uint8_t discard_flag = rd.u8();
    const std::uint8_t reserved = rd.u8();

    auto inconsistent = [](const std::string& what) { return LoadError(LoadErrorKind::DimensionInconsistent, what); };
    if (count == 0 || m == 0 || n == 0 || r == 0) throw inconsistent("zero dimension in header");
    if (r > m || r > n) throw inconsistent("rank exceeds min(m, n)");
    if (shared_flag > 1 || discard_flag > 1 || reserved != 0) throw inconsistent("invalid header flags");
    if ((bits & ~0x1Fu) != 0) throw inconsistent("unknown forms bits");
    const bool shared = shared_flag == 1;
    const bool discard_b = discard_flag == 1;
    if (discard_b == static_cast<bool>(bits & kRawB)) {
        throw inconsistent("raw B must be stored unless discard-B is set");
    }
    if (discard_b && (!(bits & kSeqr) || !shared)) throw inconsistent("discard-B requires shared A and SEQR forms");

    std::shared_ptr<const Matrix> shared_a;
    if (shared) shared_a = std::make_shared<const Matrix>(detail::read_matrix(rd, r, n));

    RoutedForms forms;
    if (bits & kArrow) forms.arrow.emplace();
    if (bits & kSpectr) forms.spectr.emplace();
    if (bits & kSeqr) forms.seqr.emplace();
    if (bits & kCalibration) forms.stats.emplace();

    std::vector<LoraAdapter> adapters;
    adapters.reserve(std::min<std::size_t>(count, rd.remaining() / 2 + 1));
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t id_len = rd.u16();
        std::string id = rd.str(id_len);
        std::optional<Matrix> b;
        std::shared_ptr<const Matrix> a = shared_a;
        if (bits & kRawB) {
            b = detail::read_matrix(rd, m, r);
            if (!shared) a = std::make_shared<const Matrix>(detail::read_matrix(rd, r, n));
        }
        if (bits & kArrow) {
            try {
                forms.arrow->push_back(ArrowForm{Vector(rd.f64s(n))});
            } catch (const InvalidArgument& e) {
                throw inconsistent(e.what());
            }
        }
        if (bits & kSpectr) {
            auto b_hat = detail::read_matrix(rd, m, r);
            auto a_hat = detail::read_matrix(rd, r, n);
            forms.spectr->push_back(SpectrForm{std::move(b_hat), std::move(a_hat)});
        }
        if (bits & kSeqr) {
            auto q = detail::read_matrix(rd, m, r);
            auto r_mat = detail::read_matrix(rd, r, r);
            forms.seqr->push_back(SeqrForm{std::move(q), std::move(r_mat)});
        }
        if (bits & kCalibration) {
            forms.stats->mu.push_back(rd.f64());
            forms.stats->sigma.push_back(rd.f64());
        }
        if (!b) b = matmul(forms.seqr->back().q, forms.seqr->back().r_mat);
        adapters.push_back(LoraAdapter{std::move(id), std::move(*b), std::move(a)});
    }

    AdapterLibrary::Meta meta;
    const std::size_t meta_count = rd.u32();
    for (std::size_t i = 0; i < meta_count; ++i) {
        const std::size_t klen = rd.u16();
        auto key = rd.str(klen);
        const std::size_t vlen = rd.u32();
        meta.emplace(std::move(key), rd.str(vlen));
    }

    const std::size_t payload_size = rd.position();
    const std::uint32_t stored_crc = rd.u32();
    if (rd.remaining() != 0) throw inconsistent("trailing bytes after CRC");
    const std::uint32_t actual_crc = crc32_of(bytes.first(payload_size));
    if (stored_crc != actual_crc) throw LoadError(LoadErrorKind::CrcMismatch, "payload checksum does not match");

    auto build = [&]() {
        if (shared) {
            std::vector<std::pair<std::string, Matrix>> bs;
            bs.reserve(adapters.size());
            for (auto& ad : adapters) bs.emplace_back(std::move(ad.id), std::move(ad.b));
            return AdapterLibrary::with_shared_a(*shared_a, std::move(bs), std::move(meta));
        }
        return AdapterLibrary::with_unique_a(std::move(adapters), std::move(meta));
    };
    try {
        return LoadedLibrary{build(), std::move(forms), discard_b};
    } catch (const LoadError&) {
        throw;
    } catch (const Error& e) {
        throw inconsistent(e.what());
    }
}

inline void save_library(const std::filesystem::path& path, const AdapterLibrary& lib, const RoutedForms& forms = {},
                         bool discard_b = false) {
    const auto bytes = encode_library(lib, forms, discard_b);
    io::write_file_atomic(path, bytes);
}

inline LoadedLibrary load_library(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return decode_library(bytes);
}

}  // namespace seqr
