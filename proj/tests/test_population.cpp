#include <cmath>
#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include <cutin/population.hpp>

using namespace cutin;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("cutin_test_" + name);
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(Population, LoadSingleNominalRow) {
    auto pop = parse_population("id,ks,kv,ka,tau,l,TL\n0,0.26,0.71,-1.31,1.18,7.64,0.37\n", "mem");
    ASSERT_EQ(pop.size(), 1u);
    EXPECT_EQ(pop.sets[0].ks, 0.26);
    EXPECT_EQ(pop.sets[0], ParamSet{});
}

TEST(Population, RejectsZeroLag) {
    try {
        parse_population("id,ks,kv,ka,tau,l,TL\nbad,0.26,0.71,-1.31,1.18,7.64,0\n", "mem");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
    }
}

TEST(Population, RejectsEmptyAndMalformedFiles) {
    EXPECT_THROW(parse_population("", "mem"), ValidationError);
    EXPECT_THROW(parse_population("id,ks,kv,ka,tau,l,TL\n", "mem"), ValidationError);
    EXPECT_THROW(parse_population("id,ks,kv\n1,2,3\n", "mem"), ValidationError);
    try {
        parse_population("id,ks,kv,ka,tau,l,TL\n0,0.26,x,-1.31,1.18,7.64,0.37\n", "mem");
        FAIL();
    } catch (const ValidationError& e) {
        std::string m = e.what();
        EXPECT_NE(m.find("row 2"), std::string::npos);
        EXPECT_NE(m.find("kv"), std::string::npos);
    }
    EXPECT_THROW(parse_population("id,ks,kv,ka,tau,l,TL\n0,1,1,1,1,1\n", "mem"), ValidationError);
    EXPECT_THROW(parse_population("id,ks,kv,ka,tau,l,TL\na,1,1,1,1,1,1\na,1,1,1,1,1,1\n", "mem"), ValidationError);
    EXPECT_THROW(load("/nonexistent/cutin.csv"), ValidationError);
}

TEST(Population, SaveLoadRoundTripsBitExactly) {
    auto pop = synth_sample(SamplerSpec::defaults(200, 4).widened(2.0));
    auto path = temp_path("roundtrip.csv");
    save(pop, path);
    auto back = load(path);
    std::filesystem::remove(path);
    ASSERT_EQ(back.size(), pop.size());
    EXPECT_EQ(back.ids, pop.ids);
    for (std::size_t i = 0; i < pop.size(); ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_TRUE(bit_equal(param_get(back.sets[i], j), param_get(pop.sets[i], j)));
}

TEST(Sampler, ZeroSpreadGivesCenter) {
    auto spec = SamplerSpec::defaults(1, 1);
    for (auto& d : spec.dist) d.spread = 0.0;
    auto pop = synth_sample(spec);
    ASSERT_EQ(pop.size(), 1u);
    EXPECT_EQ(pop.sets[0], ParamSet{});
}

TEST(Sampler, DeterministicForFixedSeed) {
    auto a = synth_sample(SamplerSpec::defaults(334, 42)), b = synth_sample(SamplerSpec::defaults(334, 42));
    EXPECT_EQ(to_csv(a), to_csv(b));
    auto c = synth_sample(SamplerSpec::defaults(334, 43));
    EXPECT_NE(to_csv(a), to_csv(c));
}

TEST(Sampler, PrefixStableUnderCount) {
    auto a = synth_sample(SamplerSpec::defaults(10, 42)), b = synth_sample(SamplerSpec::defaults(50, 42));
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a.sets[i], b.sets[i]);
}

TEST(Sampler, RespectsTruncationOverAMillionDraws) {
    auto spec = SamplerSpec::defaults(166667, 77).widened(3.0);
    auto pop = synth_sample(spec);
    std::size_t draws = 0;
    for (const auto& p : pop.sets)
        for (std::size_t j = 0; j < 6; ++j, ++draws) {
            double v = param_get(p, j);
            ASSERT_GE(v, spec.dist[j].lo);
            ASSERT_LE(v, spec.dist[j].hi);
        }
    EXPECT_GE(draws, 1000000u);
}

TEST(Sampler, SpreadsMatchTheSpecifiedFraction) {
    auto spec = SamplerSpec::defaults(20000, 8);
    auto pop = synth_sample(spec);
    // Truncation at two spreads leaves 0.88 of the normal standard deviation.
    for (std::size_t j = 0; j < 6; ++j) {
        double m = 0, s = 0;
        for (const auto& p : pop.sets) m += param_get(p, j);
        m /= double(pop.size());
        for (const auto& p : pop.sets) s += std::pow(param_get(p, j) - m, 2);
        s = std::sqrt(s / double(pop.size()));
        EXPECT_NEAR(m, spec.dist[j].center, 0.02 * std::abs(spec.dist[j].center)) << kParamNames[j];
        EXPECT_NEAR(s / spec.dist[j].spread, 0.88, 0.03) << kParamNames[j];
    }
}

TEST(Sampler, InfeasibleTruncationRejected) {
    auto spec = SamplerSpec::defaults(5, 1);
    spec.dist[0].lo = 10.0;
    spec.dist[0].hi = 11.0;
    EXPECT_THROW(synth_sample(spec), ValidationError);
    spec = SamplerSpec::defaults(5, 1);
    spec.dist[5].lo = 0.0;
    EXPECT_THROW(synth_sample(spec), ValidationError);
    spec = SamplerSpec::defaults(0, 1);
    EXPECT_THROW(synth_sample(spec), ValidationError);
}

TEST(Sampler, ProvenanceDeclaresSyntheticIndependentDraws) {
    auto pop = synth_sample(SamplerSpec::defaults(3, 9));
    auto j = pop.provenance_json();
    EXPECT_EQ(j["kind"], "synthetic");
    EXPECT_EQ(j["sampler"]["seed"], 9);
    EXPECT_EQ(j["sampler"]["distribution"], "independent truncated normal");
}
