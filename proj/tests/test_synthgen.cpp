#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "seqr/container.hpp"
#include "seqr/synthgen.hpp"

namespace seqr {
namespace {

SynthSpec small_spec(std::uint64_t seed) {
    SynthSpec s;
    s.seed = seed;
    s.n_adapters = 4;
    s.dims = Dims{32, 32, 8};
    return s;
}

TEST(Rng, FixedStream) {
    // First output of std::mt19937_64 with the default seed is fixed by the standard.
    std::mt19937_64 ref(5489u);
    EXPECT_EQ(ref(), 14514284786278117030ull);
    Rng a(5489u);
    EXPECT_EQ(a.uniform(), static_cast<double>(14514284786278117030ull >> 11) * 0x1.0p-53);
}

TEST(Rng, NormalMoments) {
    Rng rng(1);
    double sum = 0.0, sq = 0.0;
    const int count = 20000;
    for (int i = 0; i < count; ++i) {
        const double v = rng.normal();
        sum += v;
        sq += v * v;
    }
    EXPECT_NEAR(sum / count, 0.0, 0.03);
    EXPECT_NEAR(sq / count, 1.0, 0.05);
}

TEST(Rng, DeriveSeedSeparatesStreams) {
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    EXPECT_EQ(derive_seed(9, 3), derive_seed(9, 3));
}

TEST(Spec, Validation) {
    auto s = small_spec(0);
    s.task_subspace_dim = 33;
    EXPECT_THROW(validate(s), InvalidArgument);
    s = small_spec(0);
    s.signal_gain = 1.0;
    EXPECT_THROW(validate(s), InvalidArgument);
    s = small_spec(0);
    s.noise_level = -0.1;
    EXPECT_THROW(validate(s), InvalidArgument);
    s = small_spec(0);
    s.bias_scales = {1.0, 2.0};
    EXPECT_THROW(validate(s), InvalidArgument);
    s = small_spec(0);
    s.adversarial_pairs = 3;
    EXPECT_THROW(validate(s), InvalidArgument);
}

TEST(GenLibrary, DeterministicInSeed) {
    auto spec = small_spec(42);
    spec.adversarial_pairs = 1;
    const auto a = encode_library(gen_library(spec).library);
    const auto b = encode_library(gen_library(spec).library);
    EXPECT_EQ(a, b);
    spec.seed = 43;
    EXPECT_NE(encode_library(gen_library(spec).library), a);
}

TEST(GenLibrary, MetadataRecordsGeneratorAndSeed) {
    const auto lib = gen_library(small_spec(77)).library;
    EXPECT_EQ(lib.meta().at("generator"), kGeneratorName);
    EXPECT_EQ(lib.meta().at("seed"), "77");
    EXPECT_TRUE(lib.meta().contains("coherence.max_cosine"));
    EXPECT_FALSE(lib.meta().contains("warning.packing"));
}

TEST(GenLibrary, PackingWarningWhenSubspacesDoNotFit) {
    auto spec = small_spec(1);
    spec.n_adapters = 10;  // 10 * 1 > r = 8
    const auto lib = gen_library(spec).library;
    EXPECT_TRUE(lib.meta().contains("warning.packing"));
}

TEST(GenLibrary, TaskDimAboveRankClamped) {
    auto spec = small_spec(1);
    spec.n_adapters = 1;
    spec.task_subspace_dim = 12;
    const auto synth = gen_library(spec);
    EXPECT_TRUE(synth.library.meta().contains("warning.task_dim"));
    EXPECT_EQ(synth.task_bases[0].cols(), 8u);
}

TEST(GenLibrary, SharedAScaleAndSeqrPreconditions) {
    auto spec = small_spec(3);
    spec.dims = Dims{64, 64, 8};
    const auto synth = gen_library(spec);
    const auto& a = synth.library.shared_a();
    double sq = 0.0;
    for (double v : a.values()) sq += v * v;
    // Entries ~ N(0, 1/r^2): mean square 1/64.
    EXPECT_NEAR(sq / static_cast<double>(a.values().size()), 1.0 / 64.0, 0.2 / 64.0);
    EXPECT_NO_THROW(build_seqr_forms(synth.library));

    spec.shared_a = false;
    EXPECT_THROW(build_seqr_forms(gen_library(spec).library), ConfigError);
}

TEST(GenLibrary, InSubspaceGainOverOffSubspace) {
    auto spec = small_spec(5);
    spec.n_adapters = 1;
    spec.signal_gain = 4.0;
    const auto synth = gen_library(spec);
    const auto& ad = synth.library[0];
    const auto e = synth.task_bases[0].column(0);
    const double in_norm = norm2(matvec(ad.product(), e));

    Rng rng(6);
    std::vector<double> off;
    for (int t = 0; t < 201; ++t) {
        auto x = rng.gaussian(32);
        x = subtract(x, scaled(e, dot(e, x)));
        x = scaled(x, 1.0 / norm2(x));
        off.push_back(norm2(matvec(ad.product(), x)));
    }
    std::nth_element(off.begin(), off.begin() + 100, off.end());
    EXPECT_GE(in_norm, spec.signal_gain * off[100]);
}

TEST(GenLibrary, BiasScaleDominatesMeanNorm) {
    auto spec = small_spec(8);
    spec.bias_scales = {10.0, 1.0, 1.0, 1.0};
    const auto lib = gen_library(spec).library;
    Rng rng(9);
    std::vector<double> mean(4, 0.0);
    for (int t = 0; t < 500; ++t) {
        const auto s = score_naive(lib, rng.unit(32));
        for (std::size_t i = 0; i < 4; ++i) mean[i] += s[i] / 500.0;
    }
    for (std::size_t i = 1; i < 4; ++i) EXPECT_GE(mean[0], 5.0 * mean[i]);
}

TEST(GenQueries, NoiseFreeQueriesMatchTask) {
    auto spec = small_spec(10);
    spec.noise_level = 0.0;
    const auto synth = gen_library(spec);
    const auto queries = gen_queries(synth, spec, 100);
    std::size_t hit = 0;
    for (const auto& q : queries) hit += q.oracle_norm_winner == q.task;
    EXPECT_GE(static_cast<double>(hit) / static_cast<double>(queries.size()), 0.99);
}

TEST(GenQueries, HugeNoiseLooksLikeRandomDirections) {
    auto spec = small_spec(11);
    spec.noise_level = 1e6;
    const auto synth = gen_library(spec);
    const auto queries = gen_queries(synth, spec, 500);
    std::map<std::size_t, double> from_queries, from_random;
    for (const auto& q : queries) from_queries[q.oracle_norm_winner] += 1.0 / static_cast<double>(queries.size());
    Rng rng(12);
    for (std::size_t t = 0; t < queries.size(); ++t)
        from_random[select(score_naive(synth.library, rng.unit(32)))] += 1.0 / static_cast<double>(queries.size());
    double tv = 0.0;
    for (std::size_t i = 0; i < 4; ++i) tv += 0.5 * std::abs(from_queries[i] - from_random[i]);
    EXPECT_LT(tv, 0.1);
    // And the task label no longer predicts the winner.
    std::size_t hit = 0;
    for (const auto& q : queries) hit += q.oracle_norm_winner == q.task;
    EXPECT_LT(static_cast<double>(hit) / static_cast<double>(queries.size()), 0.5);
}

TEST(GenQueries, OracleRecomputableAndUnitLength) {
    auto spec = small_spec(13);
    spec.adversarial_pairs = 1;
    const auto synth = gen_library(spec);
    const auto queries = gen_queries(synth, spec, 20);
    EXPECT_EQ(queries.size(), 20u * 3u);
    for (const auto& q : queries) {
        EXPECT_EQ(q.oracle_norm_winner, select(score_naive(synth.library, q.x)));
        EXPECT_NEAR(norm2(q.x), 1.0, 1e-12);
    }
}

TEST(GenQueries, DeterministicPerStream) {
    const auto spec = small_spec(14);
    const auto synth = gen_library(spec);
    EXPECT_EQ(encode_queries(gen_queries(synth, spec, 10, 0)), encode_queries(gen_queries(synth, spec, 10, 0)));
    EXPECT_NE(encode_queries(gen_queries(synth, spec, 10, 0)), encode_queries(gen_queries(synth, spec, 10, 1)));
}

// ---------------------------------------------------------------------------

TEST(Adversarial, LiteralPair) {
    const auto lib = appendix_pair_library();
    EXPECT_EQ(select(score_arrow(build_arrow_forms(lib), Vector{1, 0})), 0u);
    EXPECT_EQ(select(score_naive(lib, Vector{1, 0})), 1u);
}

void expect_arrow_always_wrong(const AdversarialSet& set) {
    const auto& lib = set.synth.library;
    const auto arrows = build_arrow_forms(lib);
    const auto spectr = build_spectr_forms(lib);
    ASSERT_FALSE(set.queries.empty());
    for (const auto& q : set.queries) {
        EXPECT_NE(select(score_arrow(arrows, q.x)), q.oracle_norm_winner);
        EXPECT_EQ(select(score_spectr(spectr, q.x)), q.oracle_norm_winner);
        if (lib.has_shared_a()) {
            EXPECT_EQ(select(score_seqr(lib, build_seqr_forms(lib), q.x).scores), q.oracle_norm_winner);
        }
    }
}

TEST(Adversarial, EmbeddedInEightDims) {
    for (std::size_t count : {1u, 2u, 3u, 5u}) {
        AdversarialOptions opts;
        opts.seed = count;
        expect_arrow_always_wrong(gen_arrow_adversarial(count, opts));
    }
}

TEST(Adversarial, UniqueAAndLargerShapes) {
    AdversarialOptions opts;
    opts.seed = 3;
    opts.shared_a = false;
    expect_arrow_always_wrong(gen_arrow_adversarial(3, opts));
    opts.shared_a = true;
    opts.dims = Dims{40, 24, 6};
    expect_arrow_always_wrong(gen_arrow_adversarial(4, opts));
    EXPECT_THROW(gen_arrow_adversarial(0, opts), InvalidArgument);
}

// ---------------------------------------------------------------------------

TEST(QueryFile, LayoutAndRoundTrip) {
    const std::vector<LabeledQuery> qs{{Vector{1.0, -2.0}, 3, 1}, {Vector{0.5, 0.25}, 0, 0}};
    const auto bytes = encode_queries(qs);
    ASSERT_EQ(bytes.size(), 8u + 2u * (8u + 16u));
    EXPECT_EQ(bytes[0], 2);
    EXPECT_EQ(bytes[4], 2);
    EXPECT_EQ(bytes[8], 3);   // task
    EXPECT_EQ(bytes[12], 1);  // oracle
    double x0 = 0.0;
    std::memcpy(&x0, bytes.data() + 16, 8);
    EXPECT_EQ(x0, 1.0);
    const auto back = decode_queries(bytes);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].x, qs[0].x);
    EXPECT_EQ(back[0].task, 3u);
    EXPECT_EQ(back[1].oracle_norm_winner, 0u);
}

TEST(QueryFile, TruncatedAndTrailing) {
    const std::vector<LabeledQuery> qs{{Vector{1.0, -2.0}, 0, 0}};
    auto bytes = encode_queries(qs);
    for (std::size_t len = 0; len < bytes.size(); ++len) {
        EXPECT_THROW(decode_queries(std::span(bytes.data(), len)), LoadError);
    }
    bytes.push_back(1);
    EXPECT_THROW(decode_queries(bytes), LoadError);
}

TEST(QueryFile, SamplesByTask) {
    const std::vector<LabeledQuery> qs{{Vector{1.0}, 1, 0}, {Vector{2.0}, 0, 0}, {Vector{3.0}, 1, 1}};
    const auto s = samples_by_task(qs, 2);
    EXPECT_EQ(s[0].size(), 1u);
    EXPECT_EQ(s[1].size(), 2u);
    EXPECT_THROW(samples_by_task(qs, 1), DimensionError);
}

}  // namespace
}  // namespace seqr
