#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "seqr/container.hpp"
#include "seqr/synthgen.hpp"
#include "seqr/verify.hpp"

namespace seqr {
namespace {

// Bitwise CRC-32 (reflected, poly 0xEDB88320), independent of zlib.
std::uint32_t crc32_reference(std::span<const std::uint8_t> bytes) {
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) {
        crc ^= b;
        for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
    }
    return ~crc;
}

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
           std::uint32_t(b[at + 3]) << 24;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool same_bits(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && same_bits(a.values(), b.values());
}

RoutedForms all_forms(const AdapterLibrary& lib, unsigned mask) {
    RoutedForms f;
    if (mask & 1u) f.arrow = build_arrow_forms(lib);
    if (mask & 2u) f.spectr = build_spectr_forms(lib);
    if ((mask & 4u) && lib.has_shared_a()) f.seqr = build_seqr_forms(lib);
    if (mask & 8u) {
        CalibrationStats s;
        for (std::size_t i = 0; i < lib.size(); ++i) {
            s.mu.push_back(0.1 * static_cast<double>(i) + 1.0 / 3.0);
            s.sigma.push_back(1e-8 + static_cast<double>(i));
        }
        f.stats = s;
    }
    return f;
}

void expect_forms_bitwise(const RoutedForms& a, const RoutedForms& b) {
    ASSERT_EQ(a.arrow.has_value(), b.arrow.has_value());
    ASSERT_EQ(a.spectr.has_value(), b.spectr.has_value());
    ASSERT_EQ(a.seqr.has_value(), b.seqr.has_value());
    ASSERT_EQ(a.stats.has_value(), b.stats.has_value());
    if (a.arrow) {
        for (std::size_t i = 0; i < a.arrow->size(); ++i)
            EXPECT_TRUE(same_bits((*a.arrow)[i].v.values(), (*b.arrow)[i].v.values()));
    }
    if (a.spectr) {
        for (std::size_t i = 0; i < a.spectr->size(); ++i) {
            EXPECT_TRUE(same_bits((*a.spectr)[i].b_hat, (*b.spectr)[i].b_hat));
            EXPECT_TRUE(same_bits((*a.spectr)[i].a_hat, (*b.spectr)[i].a_hat));
        }
    }
    if (a.seqr) {
        for (std::size_t i = 0; i < a.seqr->size(); ++i) {
            EXPECT_TRUE(same_bits((*a.seqr)[i].q, (*b.seqr)[i].q));
            EXPECT_TRUE(same_bits((*a.seqr)[i].r_mat, (*b.seqr)[i].r_mat));
        }
    }
    if (a.stats) {
        EXPECT_TRUE(same_bits(a.stats->mu, b.stats->mu));
        EXPECT_TRUE(same_bits(a.stats->sigma, b.stats->sigma));
    }
}

TEST(Container, HeaderLayout) {
    const auto lib = appendix_pair_library();
    RoutedForms forms;
    forms.seqr = build_seqr_forms(lib);
    const auto bytes = encode_library(lib, forms);
    ASSERT_GE(bytes.size(), 25u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SQRL");
    EXPECT_EQ(bytes[4], 0x01);
    EXPECT_EQ(le32(bytes, 5), 2u);   // N
    EXPECT_EQ(le32(bytes, 9), 2u);   // m
    EXPECT_EQ(le32(bytes, 13), 2u);  // n
    EXPECT_EQ(le32(bytes, 17), 2u);  // r
    EXPECT_EQ(bytes[21], 1);         // shared A
    EXPECT_EQ(bytes[22], 0x01 | 0x08);
    EXPECT_EQ(bytes[23], 0);
    EXPECT_EQ(bytes[24], 0);
    // Shared A = I2 as little-endian f64, row-major.
    double a00 = 0.0, a01 = 0.0;
    std::memcpy(&a00, bytes.data() + 25, 8);
    std::memcpy(&a01, bytes.data() + 33, 8);
    EXPECT_EQ(a00, 1.0);
    EXPECT_EQ(a01, 0.0);
    // First adapter id follows: u16 length 1, "C".
    EXPECT_EQ(bytes[57], 1);
    EXPECT_EQ(bytes[58], 0);
    EXPECT_EQ(bytes[59], 'C');
    // Trailing CRC over everything before it.
    const std::span<const std::uint8_t> payload(bytes.data(), bytes.size() - 4);
    EXPECT_EQ(le32(bytes, bytes.size() - 4), crc32_reference(payload));
}

TEST(Container, ZlibCrcMatchesReference) {
    const std::vector<std::uint8_t> check{'1', '2', '3', '4', '5', '6', '7', '8', '9'};
    EXPECT_EQ(container::crc32_of(check), 0xCBF43926u);
    EXPECT_EQ(crc32_reference(check), 0xCBF43926u);
}

TEST(Container, RoundTripRandomLibrariesAllFormCombinations) {
    Rng rng(2024);
    for (int t = 0; t < 100; ++t) {
        const auto dims = random_dims(rng, 12, 4);
        const bool shared = t % 3 != 0;
        auto lib = random_library(rng, 1 + t % 5, dims, shared);
        lib.meta()["trial"] = std::to_string(t);
        const unsigned mask = static_cast<unsigned>(t) % 16u;
        const auto forms = all_forms(lib, mask);
        const bool discard = shared && forms.seqr && t % 2 == 0;

        const auto bytes = encode_library(lib, forms, discard);
        const auto loaded = decode_library(bytes);
        EXPECT_EQ(loaded.discard_b, discard);
        ASSERT_EQ(loaded.library.size(), lib.size());
        EXPECT_EQ(loaded.library.dims(), lib.dims());
        EXPECT_EQ(loaded.library.has_shared_a(), shared);
        EXPECT_EQ(loaded.library.meta(), lib.meta());
        for (std::size_t i = 0; i < lib.size(); ++i) {
            EXPECT_EQ(loaded.library[i].id, lib[i].id);
            EXPECT_TRUE(same_bits(*loaded.library[i].a, *lib[i].a));
            if (discard) {
                const auto& b = lib[i].b;
                EXPECT_LE(frobenius_norm(subtract(loaded.library[i].b, b)), 1e-12 * std::max(1.0, frobenius_norm(b)));
            } else {
                EXPECT_TRUE(same_bits(loaded.library[i].b, lib[i].b));
            }
        }
        expect_forms_bitwise(forms, loaded.forms);
        // Re-encoding what was loaded reproduces the file exactly.
        EXPECT_EQ(encode_library(loaded.library, loaded.forms, discard), bytes);
    }
}

TEST(Container, SaveLoadThroughFile) {
    const auto dir = std::filesystem::temp_directory_path() / "seqr_container_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "lib.sqrl";
    Rng rng(5);
    const auto lib = random_library(rng, 3, Dims{6, 5, 2}, true);
    const auto forms = all_forms(lib, 15);
    save_library(path, lib, forms);
    EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
    const auto loaded = load_library(path);
    expect_forms_bitwise(forms, loaded.forms);
    std::filesystem::remove_all(dir);
}

TEST(Container, MissingFileIsIoError) {
    EXPECT_THROW(load_library("/nonexistent/dir/lib.sqrl"), IoError);
}

LoadErrorKind kind_of(std::span<const std::uint8_t> bytes) {
    try {
        (void)decode_library(bytes);
    } catch (const LoadError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "decode succeeded";
    return LoadErrorKind::BadMagic;
}

TEST(Container, CorruptedMagic) {
    auto bytes = encode_library(appendix_pair_library());
    bytes[0] = 'X';
    EXPECT_EQ(kind_of(bytes), LoadErrorKind::BadMagic);
}

TEST(Container, WrongVersion) {
    auto bytes = encode_library(appendix_pair_library());
    bytes[4] = 0x02;
    EXPECT_EQ(kind_of(bytes), LoadErrorKind::VersionMismatch);
}

TEST(Container, EveryTruncationIsTruncated) {
    Rng rng(6);
    const auto lib = random_library(rng, 2, Dims{3, 4, 2}, true);
    const auto bytes = encode_library(lib, all_forms(lib, 15));
    for (std::size_t len = 0; len < bytes.size(); ++len) {
        EXPECT_EQ(kind_of(std::span(bytes.data(), len)), LoadErrorKind::Truncated) << "prefix " << len;
    }
}

TEST(Container, FlippedPayloadBitIsCrcMismatch) {
    const auto good = encode_library(appendix_pair_library());
    // Lowest mantissa byte of the first shared-A entry: stays finite.
    auto bytes = good;
    bytes[25] ^= 0x01;
    EXPECT_EQ(kind_of(bytes), LoadErrorKind::CrcMismatch);
    bytes = good;
    bytes.back() ^= 0x80;
    EXPECT_EQ(kind_of(bytes), LoadErrorKind::CrcMismatch);
}

TEST(Container, InconsistentHeader) {
    auto bytes = encode_library(appendix_pair_library());
    bytes[17] = 3;  // r = 3 > m
    EXPECT_EQ(kind_of(bytes), LoadErrorKind::DimensionInconsistent);
    bytes = encode_library(appendix_pair_library());
    bytes[24] = 7;  // reserved
    EXPECT_EQ(kind_of(bytes), LoadErrorKind::DimensionInconsistent);
    bytes = encode_library(appendix_pair_library());
    bytes.push_back(0);  // trailing garbage
    EXPECT_EQ(kind_of(bytes), LoadErrorKind::DimensionInconsistent);
}

TEST(Container, DiscardBNeedsSeqrForms) {
    const auto lib = appendix_pair_library();
    EXPECT_THROW(encode_library(lib, {}, true), ConfigError);
    RoutedForms forms;
    forms.seqr = build_seqr_forms(lib);
    const auto bytes = encode_library(lib, forms, true);
    EXPECT_EQ(bytes[22] & 0x01, 0);
    EXPECT_EQ(bytes[23], 1);
    EXPECT_LT(bytes.size(), encode_library(lib, forms, false).size());
}

TEST(Container, FormCountMismatchRejected) {
    const auto lib = appendix_pair_library();
    RoutedForms forms;
    forms.arrow = std::vector<ArrowForm>{ArrowForm{Vector{1.0, 0.0}}};
    EXPECT_THROW(encode_library(lib, forms), DimensionError);
}

}  // namespace
}  // namespace seqr
