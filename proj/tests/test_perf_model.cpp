// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "mrvn/perf_model.hpp"
#include "mrvn/trainer.hpp"
#include "oracles.hpp"

using namespace mrvn;

namespace {

Network mnist_cnn() {
    return Network::build({1, 28, 28}, {LayerSpec::conv2d(8, 3), LayerSpec::relu(), LayerSpec::maxpool(2),
                                        LayerSpec::flatten(), LayerSpec::dense(32), LayerSpec::relu(),
                                        LayerSpec::dense(10)});
}

}  // namespace

TEST(LayerMadds, ClosedForms) {
    EXPECT_EQ(layer_madds(LayerSpec::dense(10), {100}).madds_forward, 1000u);
    EXPECT_EQ(layer_madds(LayerSpec::dense(10), {100}).param_count, 1010u);
    const auto conv = layer_madds(LayerSpec::conv2d(8, 3), {1, 28, 28});
    EXPECT_EQ(conv.madds_forward, 26u * 26 * 8 * 9 * 1);
    EXPECT_EQ(conv.madds_forward, 48672u);
    EXPECT_EQ(conv.madds_backward, 2 * 48672u);
    EXPECT_EQ(layer_madds(LayerSpec::relu(), {100}).madds_forward, 0u);
    EXPECT_EQ(layer_madds(LayerSpec::conv2d(4, 3, 2), {2, 9, 9}).madds_forward, 4u * 4 * 4 * 9 * 2);
}

TEST(TrainingCost, UniformTimelines) {
    const auto p = network_profiles(mnist_cnn());
    const auto names = mnist_cnn().trainable_names();
    std::uint64_t total = 0;
    for (const auto& [n, lp] : p) total += lp.madds_forward + lp.madds_backward;
    const double c32 = training_cost(WordlengthTimeline::uniform(names, 32), p, 50, 16);
    EXPECT_EQ(c32, 32.0 * static_cast<double>(total) * 16 * 50);
    const double c8 = training_cost(WordlengthTimeline::uniform(names, 8), p, 50, 16);
    EXPECT_EQ(c8 * 4.0, c32);
    EXPECT_EQ(speedup(c8, c32), 4.0);
    EXPECT_EQ(speedup(c32, c32), 1.0);
}

TEST(TrainingCost, PiecewiseMatchesBruteForce) {
    const auto p = network_profiles(mnist_cnn());
    WordlengthTimeline t;
    t.add("conv0", 0, 8);
    t.add("conv0", 50, 16);
    t.add("dense4", 0, 12);
    t.add("dense6", 0, 6);
    std::map<std::string, std::vector<int>> per_batch;
    for (int b = 0; b < 100; ++b) {
        per_batch["conv0"].push_back(b < 50 ? 8 : 16);
        per_batch["dense4"].push_back(12);
        per_batch["dense6"].push_back(6);
    }
    EXPECT_EQ(training_cost(t, p, 100, 32), static_cast<double>(oracle::cost_brute_force(per_batch, p, 32)));
}

TEST(TrainingCost, RandomTimelinesLinearBoundedConsistent) {
    const Network net = mnist_cnn();
    const auto p = network_profiles(net);
    const auto names = net.trainable_names();
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> wl(1, 16);
    for (int t = 0; t < 100; ++t) {
        const std::uint64_t batches = 50 + t * 7;
        WordlengthTimeline tl;
        std::map<std::string, std::vector<int>> per_batch;
        for (const auto& n : names) {
            int w = wl(rng);
            tl.add(n, 0, w);
            for (std::uint64_t k = 0; k < batches; ++k) {
                if (k > 0 && rng() % 5 == 0) {
                    w = wl(rng);
                    tl.add(n, k, w);
                }
                per_batch[n].push_back(w);
            }
        }
        const double c = training_cost(tl, p, batches, 8);
        EXPECT_EQ(c, static_cast<double>(oracle::cost_brute_force(per_batch, p, 8)));
        EXPECT_EQ(training_cost(tl.scaled(2), p, batches, 8), 2.0 * c);
        const double full = training_cost(WordlengthTimeline::uniform(names, 32), p, batches, 8);
        const double su = speedup(c, full);
        EXPECT_EQ(su, full / c);
        EXPECT_GE(su, 1.0);
        EXPECT_LE(su, 32.0);
        EXPECT_GT(training_cost(tl, p, batches, 8, CostWeighting::Quadratic), 0.0);
    }
}

TEST(TrainingCost, GapRejected) {
    const auto p = network_profiles(mnist_cnn());
    WordlengthTimeline t;
    t.add("conv0", 0, 8);
    t.add("dense4", 5, 8);
    t.add("dense6", 0, 8);
    EXPECT_THROW(training_cost(t, p, 10, 1), std::invalid_argument);
    WordlengthTimeline missing = WordlengthTimeline::uniform({"conv0"}, 8);
    EXPECT_THROW(training_cost(missing, p, 10, 1), std::invalid_argument);
    EXPECT_THROW(t.add("conv0", 0, 8), std::invalid_argument);
    EXPECT_THROW(t.add("conv0", 9, 33), std::invalid_argument);
    EXPECT_THROW(speedup(0.0, 1.0), std::invalid_argument);
}

TEST(Ratios, SizeAndMemory) {
    CostProfiles p{{"a", {10, 20, 100}}, {"b", {10, 20, 100}}};
    std::map<std::string, FixedPointFormat, std::less<>> f16{{"a", {16, 8}}, {"b", {16, 8}}};
    EXPECT_EQ(model_size_ratio(f16, p), 0.5);
    std::map<std::string, FixedPointFormat, std::less<>> mixed{{"a", {8, 4}}, {"b", {24, 8}}};
    EXPECT_EQ(model_size_ratio(mixed, p), 0.5);

    WordlengthTimeline t;
    t.add("a", 0, 8);
    t.add("a", 5, 24);
    t.add("b", 0, 16);
    // a: (8*5 + 24*5)/10 = 16; b: 16 -> 16/32.
    EXPECT_EQ(memory_footprint_ratio(t, p, 10), 0.5);
}

TEST(Timeline, FromMetricsKeepsChangePoints) {
    std::vector<MetricsEvent> ev;
    for (std::uint64_t b = 0; b < 6; ++b) {
        MetricsEvent e;
        e.batch = b;
        e.layers = {{"a", b < 3 ? 8 : 10, 4, 4, 32}, {"b", 6, 3, 4, 32}};
        ev.push_back(e);
    }
    const auto t = timeline_from_metrics(ev);
    EXPECT_EQ(t.layers().at("a").size(), 2u);
    EXPECT_EQ(t.layers().at("b").size(), 1u);
    EXPECT_EQ(t.at("a", 2), 8);
    EXPECT_EQ(t.at("a", 3), 10);
    EXPECT_EQ(t.at("a", 100), 10);
}
