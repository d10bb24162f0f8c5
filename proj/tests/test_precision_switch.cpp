// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mrvn/precision_switch.hpp"
#include "oracles.hpp"

using namespace mrvn;

TEST(PushDown, DomainShape) {
    const std::vector<double> w{0.3, -2.5, 1.0};  // max 2.5 -> 2 integer bits
    EXPECT_EQ(integer_bits_for(w), 2);
    const auto d = push_down_domain(w, {16, 8});
    ASSERT_EQ(d.size(), 9u);
    for (int fl = 0; fl <= 8; ++fl) EXPECT_EQ(d[fl], FixedPointFormat(fl + 3, fl));
    EXPECT_EQ(integer_bits_for(std::vector<double>{0.2}), 0);
    EXPECT_EQ(integer_bits_for(std::vector<double>{4.0}), 3);
    // WL caps at 32.
    EXPECT_EQ(push_down_domain(std::vector<double>{1000.0}, {32, 31}).back(), FixedPointFormat(32, 31));
}

TEST(PushDown, InformationLossMatchesOracle) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> n(0.0, 0.5);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> w(200 + 10 * t);
        for (auto& x : w) x = n(rng);
        for (int fl : {0, 2, 4, 7, 12}) {
            const FixedPointFormat f(std::min(fl + 3, 32), fl);
            const int r = 8 + t;
            EXPECT_NEAR(information_loss(w, f, r), static_cast<double>(oracle::information_loss(w, f, r)), 1e-9)
                << "t=" << t << " fl=" << fl;
        }
    }
}

TEST(PushDown, AllZeroGivesDomainMinimum) {
    const std::vector<double> z(100, 0.0);
    EXPECT_EQ(push_down(z, {16, 8}, 32, 0.05), FixedPointFormat(1, 0));
    EXPECT_EQ(push_down(z, {32, 31}, 8, 0.05), FixedPointFormat(1, 0));
}

TEST(PushDown, OnGridWeightsNeedAtMostTheirGrid) {
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<int> k(-100, 100);
    std::vector<double> w(500);
    for (auto& x : w) x = k(rng) * 0.0625;
    const auto f = push_down(w, {16, 8}, 32, 0.05);
    EXPECT_LE(f.frac_length(), 4);
    EXPECT_EQ(f, oracle::push_down_scan(w, {16, 8}, 32, 0.05));
}

TEST(PushDown, StandardNormalMatchesScan) {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> n;
    std::vector<double> w(1000);
    for (auto& x : w) x = n(rng);
    EXPECT_EQ(push_down(w, {32, 16}, 32, 0.05), oracle::push_down_scan(w, {32, 16}, 32, 0.05));
}

TEST(PushDown, FallsBackToFinestWhenNothingPasses) {
    std::vector<double> w{0.0, 1e-12, -1e-12, 3e-13};
    const auto f = push_down(w, {6, 3}, 64, 1e-6);
    EXPECT_EQ(f, push_down_domain(w, {6, 3}).back());
}

TEST(PushUp, StepAtESquared) {
    const auto st = push_up_step(std::exp(2.0), 4, Strategy::Min);
    EXPECT_EQ(st.s1, 1);
    EXPECT_EQ(st.s2, 28);
    EXPECT_EQ(st.s, 1);
    EXPECT_EQ(push_up_step(std::exp(2.0), 4, Strategy::Max).s, 28);
    EXPECT_EQ(push_up_step(std::exp(2.0), 4, Strategy::Mean).s, 15);
}

TEST(PushUp, UnitDiversity) {
    EXPECT_EQ(push_up_step(1.0, 3, Strategy::Max).s, 1);
    EXPECT_EQ(push_up(1.0, {6, 3}, Strategy::Min), FixedPointFormat(7, 4));
    EXPECT_EQ(push_up(1.0, {6, 3}, Strategy::Max), FixedPointFormat(7, 4));
}

TEST(PushUp, InfiniteDiversityGuardsS1) {
    const auto st = push_up_step(kInfiniteDiversity, 4, Strategy::Min);
    EXPECT_EQ(st.s1, 1);
    // x = 1: min(32 - 1, 32) - 4 = 27.
    EXPECT_EQ(st.s2, 27);
}

TEST(PushUp, FormatInvariantsAndStrategyOrder) {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> logd(0.0, 6.0);
    std::uniform_int_distribution<int> wl_d(1, 32);
    for (int t = 0; t < 10000; ++t) {
        const double ds = t % 17 == 0 ? kInfiniteDiversity : std::exp(logd(rng));
        const int wl = wl_d(rng);
        const FixedPointFormat minimal(wl, std::uniform_int_distribution<int>(0, wl - 1)(rng));
        const auto a = push_up(ds, minimal, Strategy::Min);
        const auto b = push_up(ds, minimal, Strategy::Mean);
        const auto c = push_up(ds, minimal, Strategy::Max);
        for (const auto& f : {a, b, c}) {
            ASSERT_TRUE(FixedPointFormat::is_valid(f.word_length(), f.frac_length()));
            ASSERT_GE(f.frac_length(), std::min(minimal.frac_length() + 1, f.word_length() - 1));
        }
        ASSERT_LE(a.frac_length(), b.frac_length());
        ASSERT_LE(b.frac_length(), c.frac_length());
    }
}

TEST(AdaptStrategy, Transitions) {
    const std::vector<int> lb{2};
    // Window of two: avg = (1.5 + 2.5) / 2 = 2.0.
    EXPECT_EQ(adapt_strategy(std::vector<double>{1.5, 2.5}, lb, Strategy::Mean), Strategy::Max);
    EXPECT_EQ(adapt_strategy(std::vector<double>{1.5, 2.5}, lb, Strategy::Min), Strategy::Mean);
    EXPECT_EQ(adapt_strategy(std::vector<double>{1.5, 2.5}, lb, Strategy::Max), Strategy::Max);
    for (Strategy s : {Strategy::Min, Strategy::Mean, Strategy::Max}) {
        EXPECT_EQ(adapt_strategy(std::vector<double>{2.5, 1.5}, lb, s), Strategy::Min);
    }
}

TEST(AdaptStrategy, WindowIsCeilOfMeanLookback) {
    // mean lookback 2.5 -> window 3: avg(9, 1, 4) = 4.67 > 4 -> min.
    const std::vector<int> lb{2, 3};
    EXPECT_EQ(adapt_strategy(std::vector<double>{100.0, 9.0, 1.0, 4.0}, lb, Strategy::Mean), Strategy::Min);
    // window 2 would give avg 2.5 <= 4 -> max.
    const std::vector<int> lb2{2, 2};
    EXPECT_EQ(adapt_strategy(std::vector<double>{100.0, 9.0, 1.0, 4.0}, lb2, Strategy::Mean), Strategy::Max);
}

TEST(AdaptLookback, Examples) {
    EXPECT_EQ(adapt_lookback(1.0, 4, 1.0, {4, 64}), 64);
    EXPECT_EQ(adapt_lookback(kInfiniteDiversity, 17, 1.0, {4, 64}), 64);
    EXPECT_EQ(adapt_lookback(1.0, 4, 0.5, {4, 64}), 34);
    EXPECT_EQ(adapt_lookback(64.0, 64, 1.0, {4, 64}), 4);
    EXPECT_EQ(adapt_lookback(8.0, 4, 0.5, {4, 64}), 6);
}

TEST(AdaptLookbackAndResolution, StayInBounds) {
    std::mt19937_64 rng(25);
    std::uniform_real_distribution<double> logd(0.0, 8.0), g(0.01, 1.0);
    for (int t = 0; t < 5000; ++t) {
        const Bounds lbb{std::uniform_int_distribution<int>(1, 10)(rng), 0};
        const Bounds lbounds{lbb.lower, lbb.lower + std::uniform_int_distribution<int>(0, 100)(rng)};
        const Bounds rb{std::uniform_int_distribution<int>(2, 10)(rng), 0};
        const Bounds rbounds{rb.lower, rb.lower + std::uniform_int_distribution<int>(0, 100)(rng)};
        const int lb = std::uniform_int_distribution<int>(lbounds.lower, lbounds.upper)(rng);
        const int r = std::uniform_int_distribution<int>(rbounds.lower, rbounds.upper)(rng);
        const double ds = t % 11 == 0 ? kInfiniteDiversity : std::exp(logd(rng));
        const int nl = adapt_lookback(ds, lb, g(rng), lbounds);
        ASSERT_TRUE(lbounds.contains(nl));
        ASSERT_TRUE(rbounds.contains(adapt_resolution(nl, lbounds, r, rbounds)));
    }
}

TEST(AdaptResolution, Examples) {
    EXPECT_EQ(adapt_resolution(64, {4, 64}, 32, {8, 64}), 33);
    EXPECT_EQ(adapt_resolution(4, {4, 64}, 8, {8, 64}), 8);
    EXPECT_EQ(adapt_resolution(4, {4, 64}, 20, {8, 64}), 19);
    EXPECT_EQ(adapt_resolution(30, {4, 64}, 20, {8, 64}), 20);
    EXPECT_EQ(adapt_resolution(64, {4, 64}, 64, {8, 64}), 64);
}

namespace {

QuantizationMapping mapping(std::vector<std::string> names, const SwitchConfig& cfg, int lookback = 4) {
    return QuantizationMapping::create(names, {8, 4}, lookback, 32, Strategy::Mean, cfg);
}

}  // namespace

TEST(PrecisionSwitch, BelowLookbackPreservesFormats) {
    SwitchConfig cfg;
    auto q = mapping({"a", "b"}, cfg);
    const std::vector<double> wa{0.1, 0.2}, wb{0.3};
    const LayerWeightViews master{{"a", wa}, {"b", wb}};
    const auto out = precision_switch({{"a", {1.0, 0.0}}, {"b", {2.0}}}, 1.0, q, master, cfg);
    EXPECT_TRUE(out.fired.empty());
    for (const auto& l : q.layers) {
        EXPECT_EQ(l.format, FixedPointFormat(8, 4));
        EXPECT_EQ(l.grads.size(), 1u);
    }
    EXPECT_EQ(q.loss_history.size(), 1u);
}

TEST(PrecisionSwitch, ZeroWeightsUnitDiversity) {
    SwitchConfig cfg;
    cfg.lookback_bounds = {2, 2};
    auto q = mapping({"a"}, cfg, 2);
    const std::vector<double> w(10, 0.0);
    const LayerWeightViews master{{"a", w}};
    precision_switch({{"a", {1.0, 2.0}}}, 1.0, q, master, cfg);
    const auto out = precision_switch({{"a", {1.0, 2.0}}}, 1.0, q, master, cfg);
    ASSERT_EQ(out.fired, std::vector<std::string>{"a"});
    EXPECT_EQ(q.layers[0].format, push_up(1.0, push_down(w, {8, 4}, 32, cfg.epsilon_kl), q.strategy));
    EXPECT_EQ(q.layers[0].format, FixedPointFormat(2, 1));
    EXPECT_TRUE(q.layers[0].grads.empty());
}

TEST(PrecisionSwitch, LayersTriggerIndependently) {
    SwitchConfig cfg;
    cfg.lookback_bounds = {2, 2};
    auto q = mapping({"a", "b"}, cfg, 2);
    std::vector<double> wa(50), wb(50);
    std::mt19937_64 rng(26);
    std::normal_distribution<double> n;
    for (auto& x : wa) x = n(rng);
    for (auto& x : wb) x = n(rng);
    const LayerWeightViews master{{"a", wa}, {"b", wb}};
    // Prime only "a" by running it alone first.
    q.layers[0].grads.push({1.0, 1.0});
    const auto out = precision_switch({{"a", {1.0, 0.5}}, {"b", {0.5, 1.0}}}, 1.0, q, master, cfg);
    EXPECT_EQ(out.fired, std::vector<std::string>{"a"});
    EXPECT_EQ(q.layers[1].format, FixedPointFormat(8, 4));
    EXPECT_EQ(q.layers[1].grads.size(), 1u);
}

TEST(PrecisionSwitch, MissingLayerThrows) {
    SwitchConfig cfg;
    auto q = mapping({"a"}, cfg);
    const std::vector<double> w{0.0};
    EXPECT_THROW(precision_switch({}, 1.0, q, {{"a", w}}, cfg), std::invalid_argument);
    EXPECT_THROW(precision_switch({{"a", {1.0}}}, 1.0, q, {}, cfg), std::invalid_argument);
}

TEST(Strategy, ParseRoundTrip) {
    for (Strategy s : {Strategy::Min, Strategy::Mean, Strategy::Max}) EXPECT_EQ(parse_strategy(to_string(s)), s);
    EXPECT_FALSE(parse_strategy("median"));
}
