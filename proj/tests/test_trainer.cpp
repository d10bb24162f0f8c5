// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "mrvn/checkpoint.hpp"
#include "mrvn/trainer.hpp"

using namespace mrvn;
namespace fs = std::filesystem;

namespace {

const Shape kBlobShape{2};
const std::vector<LayerSpec> kMlp{LayerSpec::dense(16), LayerSpec::relu(), LayerSpec::dense(2)};

TrainerConfig blob_config() {
    TrainerConfig c;
    c.epochs = 3;
    c.batch_size = 16;
    c.seed = 5;
    return c;
}

std::vector<MetricsEvent> collect(const Trainer& t, TrainingState& st, const Dataset& d,
                                  std::optional<std::uint64_t> max_steps = std::nullopt) {
    std::vector<MetricsEvent> out;
    t.run(st, d, [&](const MetricsEvent& e) { out.push_back(e); }, max_steps);
    return out;
}

}  // namespace

TEST(TrainerConfig, Validation) {
    TrainerConfig c;
    EXPECT_NO_THROW(c.validate());
    c.batch_size = 0;
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "batch_size");
    }
    c = {};
    c.lb_bounds = {10, 5};
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.initial_lookback = 100;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, ZeroEpochs) {
    TrainerConfig c = blob_config();
    c.epochs = 0;
    const auto r = train(c, kBlobShape, kMlp, generate_blobs(2, 100, 8.0, 1));
    EXPECT_TRUE(r.metrics.empty());
    EXPECT_EQ(r.state.step, 0u);
    for (const auto& l : r.state.q.layers) EXPECT_EQ(l.format, FixedPointFormat(8, 4));
}

TEST(Trainer, InitializationIsQuantizedCopy) {
    const Trainer t(blob_config(), kBlobShape, kMlp);
    const auto st = t.initialize();
    for (std::size_t i : st.net.trainable_indices()) {
        const Layer& l = st.net.layers()[i];
        EXPECT_EQ(l.weight, l.qweight);
        EXPECT_TRUE(conforms(l.qweight.data, {8, 4}));
        double max_abs = 0.0;
        for (double w : l.weight.data) max_abs = std::max(max_abs, std::abs(w));
        EXPECT_GT(max_abs, 0.0);
    }
}

TEST(Trainer, MetricsShape) {
    const auto data = generate_blobs(2, 100, 8.0, 1);
    const auto r = train(blob_config(), kBlobShape, kMlp, data);
    ASSERT_EQ(r.metrics.size(), 3u * 7u);
    for (std::size_t i = 0; i < r.metrics.size(); ++i) {
        EXPECT_EQ(r.metrics[i].batch, i);
        EXPECT_EQ(r.metrics[i].epoch, i / 7);
        ASSERT_EQ(r.metrics[i].layers.size(), 2u);
        EXPECT_EQ(r.metrics[i].layers[0].name, "dense0");
        EXPECT_EQ(r.metrics[i].layers[1].name, "dense2");
    }
}

TEST(Trainer, Deterministic) {
    const auto data = generate_blobs(2, 300, 8.0, 2);
    const auto a = train(blob_config(), kBlobShape, kMlp, data);
    const auto b = train(blob_config(), kBlobShape, kMlp, data);
    EXPECT_EQ(a.metrics, b.metrics);
    TrainerConfig other = blob_config();
    other.seed = 6;
    EXPECT_NE(train(other, kBlobShape, kMlp, data).metrics, a.metrics);
}

TEST(Trainer, MasterQuantCoherenceAndFiniteLoss) {
    TrainerConfig c = blob_config();
    c.epochs = 16;  // 16 * 32 = 512 steps
    const auto data = generate_blobs(2, 500, 4.0, 3);
    const Trainer t(c, kBlobShape, kMlp);
    auto st = t.initialize();
    std::uint64_t steps = 0;
    t.run(st, data, [&](const MetricsEvent& e) {
        ASSERT_TRUE(std::isfinite(e.loss));
        ASSERT_GE(e.loss, 0.0);
        ++steps;
    });
    EXPECT_GE(steps, 500u);
    for (std::size_t idx : st.net.trainable_indices()) {
        const Layer& l = st.net.layers()[idx];
        Rng rng = substream(c.seed, Stream::WeightQuant, idx, st.step);
        Tensor w = l.weight, b = l.bias;
        const auto& fmt = st.q.find(l.name)->format;
        quantize_inplace(w.span(), fmt, rng);
        quantize_inplace(b.span(), fmt, rng);
        EXPECT_EQ(w, l.qweight);
        EXPECT_EQ(b, l.qbias);
    }
}

TEST(Trainer, FloatBaselinePinsFormats) {
    const auto data = generate_blobs(2, 200, 8.0, 4);
    const auto r = train(blob_config().float_baseline(), kBlobShape, kMlp, data);
    for (const auto& e : r.metrics) {
        for (const auto& l : e.layers) {
            EXPECT_EQ(l.wl, 32);
            EXPECT_EQ(l.fl, 16);
        }
    }
}

TEST(Trainer, ShapeMismatchRejected) {
    const Trainer t(blob_config(), kBlobShape, kMlp);
    auto st = t.initialize();
    EXPECT_THROW(t.run(st, generate_blobs(2, 100, 8.0, 1, 3), {}), std::invalid_argument);
    EXPECT_THROW(t.run(st, generate_blobs(3, 100, 8.0, 1), {}), std::invalid_argument);
}

TEST(Trainer, DivergenceNamesLayer) {
    const Trainer t(blob_config(), kBlobShape, kMlp);
    auto st = t.initialize();
    st.net.layer(2).qweight.data[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        t.run(st, generate_blobs(2, 100, 8.0, 1), {});
        FAIL() << "expected TrainingDiverged";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.layer(), "dense2");
    }
}

TEST(Evaluate, Cases) {
    Network net = Network::build({2}, {LayerSpec::dense(2)});
    net.layer(0).qweight.data = {1.0, 0.0, 0.0, 1.0};
    Dataset one{{2}, {0.0, 1.0}, {1}, 2};
    EXPECT_EQ(evaluate(net, one), 1.0);

    // Untrained uniform logits pick class 0 every time.
    std::mt19937_64 rng(9);
    Network flat = Network::build({3}, {LayerSpec::dense(10)});
    Dataset rnd{{3}, std::vector<double>(3 * 5000, 0.5), std::vector<int>(5000), 10};
    for (auto& y : rnd.labels) y = static_cast<int>(rng() % 10);
    const double acc = evaluate(flat, rnd);
    EXPECT_NEAR(acc, 0.1, 3.0 * std::sqrt(0.1 * 0.9 / 5000));
    EXPECT_EQ(evaluate(flat, rnd), acc);
}

TEST(Checkpoint, RoundTripExact) {
    const auto data = generate_blobs(2, 200, 8.0, 5);
    const Trainer t(blob_config(), kBlobShape, kMlp);
    auto st = t.initialize();
    collect(t, st, data, 9);
    const auto bytes = serialize_state(st);
    const auto back = deserialize_state(bytes);
    EXPECT_EQ(serialize_state(back), bytes);
    EXPECT_EQ(back.step, 9u);
    EXPECT_EQ(back.q.strategy, st.q.strategy);
    EXPECT_EQ(back.q.loss_history, st.q.loss_history);
    for (std::size_t i : st.net.trainable_indices()) {
        EXPECT_EQ(back.net.layers()[i].weight, st.net.layers()[i].weight);
        EXPECT_EQ(back.net.layers()[i].qbias, st.net.layers()[i].qbias);
    }
    for (std::size_t i = 0; i < st.q.layers.size(); ++i) {
        EXPECT_EQ(back.q.layers[i].format, st.q.layers[i].format);
        EXPECT_EQ(back.q.layers[i].grads.entries(), st.q.layers[i].grads.entries());
    }
}

TEST(Checkpoint, TruncationAndTrailingBytesRejected) {
    const Trainer t(blob_config(), kBlobShape, kMlp);
    const auto bytes = serialize_state(t.initialize());
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        EXPECT_THROW(deserialize_state(part), ParseError) << cut;
    }
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_THROW(deserialize_state(extra), ParseError);
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(deserialize_state(bad), ParseError);
    auto ver = bytes;
    ver[4] = 9;
    EXPECT_THROW(deserialize_state(ver), ParseError);
}

TEST(Checkpoint, ResumeReproducesTail) {
    const auto data = generate_blobs(2, 300, 8.0, 6);
    const Trainer t(blob_config(), kBlobShape, kMlp);

    auto full_state = t.initialize();
    const auto full = collect(t, full_state, data);

    const auto dir = fs::temp_directory_path() / "mrvn_test_resume";
    fs::create_directories(dir);
    auto st = t.initialize();
    const auto head = collect(t, st, data, 23);  // stops mid-epoch
    save_checkpoint(dir / "ck.bin", st);

    const Trainer fresh(blob_config(), kBlobShape, kMlp);
    auto resumed = load_checkpoint(dir / "ck.bin");
    const auto tail = collect(fresh, resumed, data);

    ASSERT_EQ(head.size() + tail.size(), full.size());
    EXPECT_EQ(std::vector<MetricsEvent>(full.begin(), full.begin() + 23), head);
    EXPECT_EQ(std::vector<MetricsEvent>(full.begin() + 23, full.end()), tail);
    EXPECT_EQ(serialize_state(resumed), serialize_state(full_state));
    EXPECT_THROW(load_checkpoint(dir / "missing.bin"), std::runtime_error);
}

TEST(EpochOrder, PermutationAndDeterminism) {
    const auto a = epoch_order(1, 0, 100);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
    EXPECT_EQ(epoch_order(1, 0, 100), a);
    EXPECT_NE(epoch_order(1, 1, 100), a);
}

TEST(Trainer, LossMovingAverageNonIncreasingOnBlobs) {
    TrainerConfig c = blob_config();
    c.epochs = 10;
    c.seed = 7;
    const auto r = train(c, kBlobShape, kMlp, generate_blobs(2, 500, 8.0, 11));
    ASSERT_GE(r.metrics.size(), 300u);
    std::vector<double> avg;
    for (std::size_t s = 0; s + 100 <= r.metrics.size(); s += 100) {
        double sum = 0.0;
        for (std::size_t i = s; i < s + 100; ++i) {
            ASSERT_TRUE(std::isfinite(r.metrics[i].loss));
            sum += r.metrics[i].loss;
        }
        avg.push_back(sum / 100.0);
    }
    for (std::size_t i = 1; i < avg.size(); ++i) EXPECT_LE(avg[i], avg[i - 1]) << "window " << i;
}

TEST(Trainer, SwitchesFormatInsideAnEpoch) {
    TrainerConfig c = blob_config();
    c.epochs = 4;
    const auto r = train(c, kBlobShape, kMlp, generate_blobs(2, 500, 8.0, 11));
    ASSERT_GE(r.metrics.size(), 100u);
    bool intra = false;
    for (std::size_t i = 1; i < r.metrics.size(); ++i) {
        if (r.metrics[i].epoch != r.metrics[i - 1].epoch) continue;
        for (std::size_t k = 0; k < r.metrics[i].layers.size(); ++k) {
            const auto& a = r.metrics[i - 1].layers[k];
            const auto& b = r.metrics[i].layers[k];
            intra = intra || a.wl != b.wl || a.fl != b.fl;
        }
    }
    EXPECT_TRUE(intra);
}
