#include "locsim/traffic.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

using namespace locsim;

TEST(NextCallTime, ExponentialWithTheConfiguredRate) {
    Rng rng(101, "calls", 0);
    const double rate = 2.0;
    const Seconds now = 5.0;
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const auto t = next_call_time(now, rate, rng);
        ASSERT_TRUE(t.has_value());
        ASSERT_GT(*t, now);
        sum += *t - now;
    }
    // Sample mean of Exp(2) over 2e5 draws: 1/rate +- 5 sigma.
    EXPECT_NEAR(sum / n, 1.0 / rate, 5.0 * (1.0 / rate) / std::sqrt(double(n)));
}

TEST(NextCallTime, ZeroRateMeansNoCall) {
    Rng rng(1);
    EXPECT_FALSE(next_call_time(0.0, 0.0, rng).has_value());
    EXPECT_FALSE(next_call_time(3.0, -1.0, rng).has_value());
}

TEST(PreferredSet, FixedSizeDistinctAndNeverTheCaller) {
    Rng rng(7, "peers");
    const auto set = build_preferred_set(3, 100, 5, rng);
    ASSERT_EQ(set.size(), 5u);
    std::set<UserId> uniq(set.begin(), set.end());
    EXPECT_EQ(uniq.size(), 5u);
    EXPECT_FALSE(uniq.count(3));

    // Capped by population - 1.
    Rng rng2(7, "peers");
    const auto small = build_preferred_set(0, 3, 5, rng2);
    EXPECT_EQ(small.size(), 2u);

    // Same seed, same set.
    Rng rng3(7, "peers");
    EXPECT_EQ(build_preferred_set(3, 100, 5, rng3), set);
}

TEST(PickCallee, NeverReturnsTheCaller) {
    Rng peers(11, "peers");
    CallParams params;
    params.preferred_set_size = 4;
    params.preferred_prob = 0.5;
    CallProcess proc(20, params, peers);
    Rng rng(11, "callee");
    for (int i = 0; i < 50000; ++i) {
        const UserId callee = proc.pick_callee(7, rng);
        ASSERT_NE(callee, 7);
        ASSERT_GE(callee, 0);
        ASSERT_LT(callee, 20);
    }
}

TEST(PickCallee, PreferredMassMatchesTheAnalyticValue) {
    const int population = 100, k = 5;
    const double p = 0.8;
    Rng peers(19, "peers");
    CallParams params;
    params.preferred_set_size = k;
    params.preferred_prob = p;
    CallProcess proc(population, params, peers);

    const auto& pref = proc.preferred(0);
    const std::set<UserId> pref_set(pref.begin(), pref.end());
    Rng rng(19, "callee");
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i)
        if (pref_set.count(proc.pick_callee(0, rng))) ++hits;

    // The complement branch is uniform over the whole population minus the
    // caller, so preferred members also catch part of the 1-p mass.
    const double expect = p + (1.0 - p) * double(k) / double(population - 1);
    const double sigma = std::sqrt(expect * (1.0 - expect) / n);
    EXPECT_NEAR(double(hits) / n, expect, 6.0 * sigma);
}

TEST(PickCallee, ZeroSkewIsUniformOverEveryoneElse) {
    const int population = 100;
    Rng peers(23, "peers");
    CallParams params;
    params.preferred_set_size = 5;
    params.preferred_prob = 0.0;
    CallProcess proc(population, params, peers);

    Rng rng(23, "callee");
    std::vector<int> counts(population, 0);
    const int n = 200000;
    for (int i = 0; i < n; ++i) counts[proc.pick_callee(0, rng)]++;

    EXPECT_EQ(counts[0], 0);
    const double expect = double(n) / (population - 1);
    for (UserId u = 1; u < population; ++u)
        EXPECT_NEAR(counts[u], expect, 6.0 * std::sqrt(expect)) << "callee " << u;
}

TEST(PickCallee, FullSkewWithSingletonSetAlwaysHitsThePeer) {
    Rng peers(29, "peers");
    CallParams params;
    params.preferred_set_size = 1;
    params.preferred_prob = 1.0;
    CallProcess proc(10, params, peers);
    const UserId peer = proc.preferred(2).at(0);
    Rng rng(29, "callee");
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(proc.pick_callee(2, rng), peer);
}

TEST(CallParams, ValidationRejectsNonsense) {
    CallParams bad_k;
    bad_k.preferred_set_size = 0;
    EXPECT_THROW(validate_call_params(bad_k), std::invalid_argument);
    CallParams bad_p;
    bad_p.preferred_prob = 1.5;
    EXPECT_THROW(validate_call_params(bad_p), std::invalid_argument);
    CallParams no_rate;
    no_rate.cmr = 0.0;
    no_rate.call_rate = 0.0;
    EXPECT_THROW(validate_call_params(no_rate), std::invalid_argument);
    Rng peers(1);
    CallParams ok;
    EXPECT_THROW(CallProcess(1, ok, peers), std::invalid_argument);
}
