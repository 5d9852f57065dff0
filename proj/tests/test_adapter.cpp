#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "seqr/adapter.hpp"
#include "seqr/routing.hpp"
#include "seqr/synthgen.hpp"
#include "seqr/verify.hpp"

namespace seqr {
namespace {

const double kH = 1.0 / std::numbers::sqrt2;

TEST(Library, RejectsEmpty) {
    EXPECT_THROW(AdapterLibrary::with_shared_a(Matrix(2, 4), {}), InvalidArgument);
}

TEST(Library, RejectsShapeMismatch) {
    std::vector<std::pair<std::string, Matrix>> bs;
    bs.emplace_back("a", Matrix(3, 2));
    bs.emplace_back("b", Matrix(3, 1));
    EXPECT_THROW(AdapterLibrary::with_shared_a(Matrix(2, 4), std::move(bs)), DimensionError);
}

TEST(Library, RejectsRankAboveMinDim) {
    std::vector<std::pair<std::string, Matrix>> bs;
    bs.emplace_back("a", Matrix(2, 3));
    EXPECT_THROW(AdapterLibrary::with_shared_a(Matrix(3, 5), std::move(bs)), DimensionError);
}

TEST(Library, RejectsDuplicateIds) {
    std::vector<std::pair<std::string, Matrix>> bs;
    bs.emplace_back("a", Matrix(3, 2));
    bs.emplace_back("a", Matrix(3, 2));
    EXPECT_THROW(AdapterLibrary::with_shared_a(Matrix(2, 4), std::move(bs)), InvalidArgument);
}

TEST(Library, SharedAIsOneObject) {
    Rng rng(1);
    const auto lib = random_library(rng, 4, Dims{5, 6, 2}, true);
    EXPECT_TRUE(lib.has_shared_a());
    for (const auto& ad : lib.adapters()) EXPECT_EQ(ad.a.get(), &lib.shared_a());
    EXPECT_EQ(lib.dims(), (Dims{5, 6, 2}));
}

TEST(Library, FoldScaling) {
    const auto b = fold_lora_scaling(Matrix::from_rows({{1, 2}, {3, 4}}), 16.0);
    EXPECT_EQ(b, Matrix::from_rows({{8, 16}, {24, 32}}));
}

// ---------------------------------------------------------------------------

TEST(Arrow, CounterexampleVectors) {
    const auto lib = appendix_pair_library();
    const auto forms = build_arrow_forms(lib);
    // C = diag(2,1): top right singular vector ±(1,0).
    EXPECT_NEAR(std::abs(forms[0].v[0]), 1.0, 1e-14);
    EXPECT_NEAR(forms[0].v[1], 0.0, 1e-14);
    // D: top right singular vector ±(1,1)/√2.
    EXPECT_NEAR(std::abs(forms[1].v[0]), kH, 1e-14);
    EXPECT_NEAR(forms[1].v[0] * forms[1].v[1], 0.5, 1e-14);
}

TEST(Arrow, ZeroAdapterRejected) {
    LoraAdapter ad{"z", Matrix(3, 2), std::make_shared<const Matrix>(Matrix(2, 4))};
    EXPECT_THROW(build_arrow(ad), InvalidArgument);
    // SpectR and SEQR accept it and score zero.
    const auto f = build_spectr(ad);
    EXPECT_EQ(norm2(matvec(f.a_hat, Vector{1, 2, 3, 4})), 0.0);
}

TEST(Arrow, MatchesFirstRightSingularVectorOfProduct) {
    Rng rng(5);
    for (int t = 0; t < 30; ++t) {
        const auto dims = random_dims(rng, 20, 6);
        const auto lib = random_library(rng, 1, dims, t % 2 == 0);
        const auto v = build_arrow(lib[0]).v;
        // Oracle: SVD of the explicit product.
        const auto ref = thin_svd(lib[0].product());
        const double cosine = std::abs(dot(v, ref.v.column(0)));
        EXPECT_NEAR(cosine, 1.0, 1e-9);
        EXPECT_NEAR(norm2(v), 1.0, 1e-12);
    }
}

TEST(Spectr, DiagonalAdapter) {
    const auto f = build_spectr(appendix_pair_library()[0]);
    EXPECT_NEAR(std::abs(f.a_hat(0, 0)), 2.0, 1e-14);
    EXPECT_NEAR(std::abs(f.a_hat(1, 1)), 1.0, 1e-14);
    EXPECT_NEAR(f.a_hat(0, 1), 0.0, 1e-14);
    EXPECT_NEAR(f.a_hat(1, 0), 0.0, 1e-14);
}

TEST(Spectr, FactorsReconstructProductAndBHatOrthonormal) {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        const auto dims = random_dims(rng, 24, 8);
        const auto lib = random_library(rng, 1, dims, t % 2 == 0);
        const auto f = build_spectr(lib[0]);
        const auto prod = lib[0].product();
        EXPECT_LE(frobenius_norm(subtract(matmul(f.b_hat, f.a_hat), prod)), 1e-10 * std::max(1.0, frobenius_norm(prod)));
        EXPECT_LE(orthonormality_error(f.b_hat), 1e-10);
        // Rows of a_hat are mutually orthogonal.
        const auto gram = matmul(f.a_hat, transpose(f.a_hat));
        for (std::size_t i = 0; i < gram.rows(); ++i)
            for (std::size_t j = 0; j < gram.cols(); ++j)
                if (i != j) { EXPECT_NEAR(gram(i, j), 0.0, 1e-9 * std::max(1.0, frobenius_norm(prod) * frobenius_norm(prod))); }
    }
}

TEST(Spectr, ScoreEqualsNaiveNorm) {
    Rng rng(7);
    for (int t = 0; t < 200; ++t) {
        const auto dims = random_dims(rng, 32, 8);
        const auto lib = random_library(rng, 3, dims, t % 2 == 0);
        const auto x = rng.gaussian(dims.n);
        const auto got = score_spectr(build_spectr_forms(lib), x);
        // Oracle: explicit product then norm.
        for (std::size_t i = 0; i < lib.size(); ++i) {
            const double want = norm2(matvec(lib[i].product(), x));
            EXPECT_LE(std::abs(got[i] - want), 1e-9 * std::max(1.0, want));
        }
    }
}

TEST(Seqr, RefusesUniqueA) {
    Rng rng(8);
    const auto lib = random_library(rng, 3, Dims{5, 6, 2}, false);
    EXPECT_THROW(build_seqr(lib, 0), ConfigError);
    EXPECT_THROW(build_seqr_forms(lib), ConfigError);
}

TEST(Seqr, QrOfBAndScoreEqualsNaive) {
    Rng rng(9);
    for (int t = 0; t < 200; ++t) {
        const auto dims = random_dims(rng, 32, 8);
        const auto lib = random_library(rng, 3, dims, true);
        const auto forms = build_seqr_forms(lib);
        const auto x = rng.gaussian(dims.n);
        const auto got = score_seqr(lib, forms, x);
        for (std::size_t i = 0; i < lib.size(); ++i) {
            EXPECT_LE(frobenius_norm(subtract(matmul(forms[i].q, forms[i].r_mat), lib[i].b)),
                      1e-10 * std::max(1.0, frobenius_norm(lib[i].b)));
            const double want = norm2(matvec(lib[i].product(), x));
            EXPECT_LE(std::abs(got.scores[i] - want), 1e-9 * std::max(1.0, want));
        }
    }
}


TEST(Arrow, RankOneOuterProduct) {
    // B A = u w^T with w = (1, 2, 2): v = w / 3.
    const auto lib = AdapterLibrary::with_shared_a(Matrix(1, 3, {1.0, 2.0, 2.0}), {{"a", Matrix(2, 1, {0.6, -0.8})}});
    const auto v = build_arrow(lib[0]).v;
    EXPECT_NEAR(v[0], 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(v[1], 2.0 / 3.0, 1e-14);
    EXPECT_NEAR(v[2], 2.0 / 3.0, 1e-14);
}

TEST(Spectr, ZeroBGivesZeroAHat) {
    const auto lib = AdapterLibrary::with_shared_a(Matrix::identity(3), {{"z", Matrix(4, 3)}});
    EXPECT_EQ(build_spectr(lib[0]).a_hat, Matrix(3, 3));
}

TEST(Spectr, RandomEightByFour) {
    Rng rng(41);
    const auto lib = AdapterLibrary::with_shared_a(rng.gaussian(4, 16), {{"a", rng.gaussian(8, 4)}});
    const auto f = build_spectr(lib[0]);
    const auto prod = lib[0].product();
    EXPECT_LE(frobenius_norm(subtract(matmul(f.b_hat, f.a_hat), prod)), 1e-10 * frobenius_norm(prod));
}

TEST(Spectr, ArrowIsFirstRowDirectionOfAHat) {
    Rng rng(42);
    for (int t = 0; t < 50; ++t) {
        const auto lib = random_library(rng, 1, random_dims(rng, 16, 5), true);
        const auto f = build_spectr(lib[0]);
        const auto v = build_arrow(lib[0]).v;
        const auto row = Vector(std::vector<double>(f.a_hat.row(0).begin(), f.a_hat.row(0).end()));
        EXPECT_NEAR(std::abs(dot(v, row)) / norm2(row), 1.0, 1e-10);
    }
}

TEST(Seqr, OrthonormalBGivesIdentityR) {
    Rng rng(43);
    const auto q = reduced_qr(rng.gaussian(7, 3)).q;
    const auto lib = AdapterLibrary::with_shared_a(rng.gaussian(3, 5), {{"a", q}});
    const auto f = build_seqr(lib, 0);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(f.r_mat(i, j), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Seqr, SingleColumnAndRandomSixteenByEight) {
    const auto one = AdapterLibrary::with_shared_a(Matrix(1, 2, {1.0, 0.0}), {{"a", Matrix(2, 1, {3.0, 4.0})}});
    EXPECT_NEAR(build_seqr(one, 0).r_mat(0, 0), 5.0, 1e-15);

    Rng rng(44);
    const auto lib = AdapterLibrary::with_shared_a(rng.gaussian(8, 8), {{"a", rng.gaussian(16, 8)}});
    const auto f = build_seqr(lib, 0);
    EXPECT_LE(frobenius_norm(subtract(matmul(f.q, f.r_mat), lib[0].b)), 1e-12);
}

}  // namespace
}  // namespace seqr
