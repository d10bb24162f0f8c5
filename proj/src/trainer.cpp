// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "mrvn/rng.hpp"

namespace mrvn {

void TrainerConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs", "must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive");
    if (!(alpha >= 0.0)) throw ConfigError("alpha", "must be >= 0");
    if (!(beta >= 0.0)) throw ConfigError("beta", "must be >= 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in (0, 1]");
    if (!(epsilon_kl > 0.0)) throw ConfigError("epsilon_kl", "must be positive");
    if (!(tnvs_scale > 0.0)) throw ConfigError("tnvs_scale", "must be positive");
    if (lb_bounds.lower < 1 || lb_bounds.lower > lb_bounds.upper) {
        throw ConfigError("lb_bounds", "need 1 <= lower <= upper");
    }
    if (r_bounds.lower < 2 || r_bounds.lower > r_bounds.upper) {
        throw ConfigError("r_bounds", "need 2 <= lower <= upper");
    }
    if (!lb_bounds.contains(initial_lookback)) throw ConfigError("initial_lookback", "outside lb_bounds");
    if (!r_bounds.contains(initial_resolution)) throw ConfigError("initial_resolution", "outside r_bounds");
}

SwitchConfig TrainerConfig::switch_config() const {
    return SwitchConfig{lb_bounds, r_bounds, gamma, epsilon_kl};
}

TrainerConfig TrainerConfig::float_baseline() const {
    TrainerConfig c = *this;
    c.initial_format = FixedPointFormat{32, 16};
    c.precision_switching = false;
    c.quantize_gradients = false;
    return c;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint32_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = substream(seed, Stream::Shuffle, epoch);
    // Fisher-Yates with our own uniform draw keeps the order library-independent.
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    return order;
}

void requantize(Network& net, const QuantizationMapping& q, std::uint64_t seed, std::uint64_t step) {
    for (std::size_t idx : net.trainable_indices()) {
        Layer& l = net.layer(idx);
        const LayerQuantState* s = q.find(l.name);
        if (!s) throw std::invalid_argument(fmt::format("quantization mapping has no entry for '{}'", l.name));
        Rng rng = substream(seed, Stream::WeightQuant, idx, step);
        l.qweight = l.weight;
        quantize_inplace(l.qweight.span(), s->format, rng);
        l.qbias = l.bias;
        quantize_inplace(l.qbias.span(), s->format, rng);
    }
}

MetricsEvent snapshot(const TrainingState& state, double loss) {
    MetricsEvent e;
    e.epoch = state.epoch;
    e.batch = state.step;
    e.loss = loss;
    e.strategy = state.q.strategy;
    for (const auto& l : state.q.layers) {
        e.layers.push_back({l.name, l.format.word_length(), l.format.frac_length(), l.lookback, l.resolution});
    }
    return e;
}

Trainer::Trainer(TrainerConfig config, Shape input_shape, std::vector<LayerSpec> architecture)
    : config_(std::move(config)), input_shape_(std::move(input_shape)), architecture_(std::move(architecture)) {
    config_.validate();
    // Resolve once so shape errors surface at construction.
    (void)Network::build(input_shape_, architecture_);
}

TrainingState Trainer::initialize() const {
    TrainingState st{Network::build(input_shape_, architecture_), {}, config_.seed, 0, 0, 0};
    const auto names = st.net.trainable_names();
    st.q = QuantizationMapping::create(names, config_.initial_format, config_.initial_lookback,
                                       config_.initial_resolution, config_.initial_strategy, config_.switch_config());
    for (std::size_t idx : st.net.trainable_indices()) {
        Layer& l = st.net.layer(idx);
        Rng rng = substream(config_.seed, Stream::Init, idx);
        l.weight = tnvs_init(l.weight.shape, config_.tnvs_scale, rng);
    }
    requantize(st.net, st.q, config_.seed, 0);
    // The float master starts as a copy of the quantized initialization.
    for (std::size_t idx : st.net.trainable_indices()) {
        Layer& l = st.net.layer(idx);
        l.weight = l.qweight;
        l.bias = l.qbias;
    }
    return st;
}

std::size_t Trainer::batches_per_epoch(const Dataset& data) const {
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    return (data.size() + bs - 1) / bs;
}

void Trainer::run(TrainingState& state, const Dataset& data, const MetricsSink& sink,
                  std::optional<std::uint64_t> max_steps) const {
    if (data.size() == 0) throw std::invalid_argument("training dataset is empty");
    if (data.sample_size() != shape_size(state.net.input_shape())) {
        throw std::invalid_argument(fmt::format("dataset samples {} do not fit network input {}",
                                                shape_to_string(data.sample_shape),
                                                shape_to_string(state.net.input_shape())));
    }
    if (data.num_classes > state.net.num_classes()) {
        throw std::invalid_argument(fmt::format("dataset has {} classes but the network outputs {}", data.num_classes,
                                                state.net.num_classes()));
    }
    if (state.seed != config_.seed) {
        throw std::invalid_argument(fmt::format("state seed {} does not match config seed {}", state.seed, config_.seed));
    }
    const std::size_t per_epoch = batches_per_epoch(data);
    std::uint64_t done = 0;
    while (state.epoch < static_cast<std::uint32_t>(config_.epochs)) {
        const auto order = epoch_order(config_.seed, state.epoch, data.size());
        while (state.batch_in_epoch < per_epoch) {
            if (max_steps && done >= *max_steps) return;
            step(state, data, order, sink);
            ++done;
        }
        ++state.epoch;
        state.batch_in_epoch = 0;
    }
}

void Trainer::step(TrainingState& state, const Dataset& data, const std::vector<std::size_t>& order,
                   const MetricsSink& sink) const {
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    const std::size_t begin = state.batch_in_epoch * bs;
    const std::size_t end = std::min(begin + bs, order.size());
    const std::span<const std::size_t> idx(order.data() + begin, end - begin);

    const Tensor batch = data.batch(idx, state.net.input_shape());
    const auto labels = data.batch_labels(idx);

    ForwardResult fr;
    try {
        fr = forward(state.net, batch, labels);
    } catch (const NonFiniteActivation& e) {
        throw TrainingDiverged(e.layer(), fmt::format("step {}: {}", state.step, e.what()));
    }
    if (!std::isfinite(fr.loss)) {
        throw TrainingDiverged(state.net.layers().back().name,
                               fmt::format("step {}: non-finite loss at output layer '{}'", state.step,
                                           state.net.layers().back().name));
    }
    GradMap grads = backward(state.net, fr.cache, labels);

    for (std::size_t li : state.net.trainable_indices()) {
        const Layer& l = state.net.layers()[li];
        ParamGrads& g = grads.at(l.name);
        const auto finite = [](const Tensor& t) {
            return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
        };
        if (!finite(g.weight) || !finite(g.bias)) {
            throw TrainingDiverged(l.name, fmt::format("step {}: non-finite gradient in layer '{}'", state.step, l.name));
        }
        if (config_.quantize_gradients) {
            const FixedPointFormat& fmt_l = state.q.find(l.name)->format;
            Rng rng = substream(config_.seed, Stream::GradQuant, li, state.step);
            quantize_inplace(g.weight.span(), fmt_l, rng);
            quantize_inplace(g.bias.span(), fmt_l, rng);
        }
    }

    if (config_.precision_switching) {
        LayerGradients qgrads;
        LayerWeightViews master;
        for (const auto& [name, g] : grads) {
            qgrads.emplace(name, g.weight.data);
            master.emplace(name, state.net.find(name)->weight.span());
        }
        precision_switch(std::move(qgrads), fr.loss, state.q, master, config_.switch_config());
    } else {
        state.q.push_loss(fr.loss);
    }

    sgd_step(state.net, grads, config_.lr, config_.alpha, config_.beta);
    requantize(state.net, state.q, config_.seed, state.step + 1);

    if (sink) sink(snapshot(state, fr.loss));
    ++state.step;
    ++state.batch_in_epoch;
}

TrainResult train(const TrainerConfig& config, const Shape& input_shape, const std::vector<LayerSpec>& architecture,
                  const Dataset& data) {
    Trainer trainer(config, input_shape, architecture);
    TrainResult r{trainer.initialize(), {}};
    trainer.run(r.state, data, [&](const MetricsEvent& e) { r.metrics.push_back(e); });
    return r;
}

double evaluate(const Network& net, const Dataset& data) {
    if (data.size() == 0) throw std::invalid_argument("evaluation dataset is empty");
    constexpr std::size_t kChunk = 256;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += kChunk) {
        idx.resize(std::min(kChunk, data.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Tensor logits = predict(net, data.batch(idx, net.input_shape()));
        const std::size_t k = logits.shape[1];
        for (std::size_t b = 0; b < idx.size(); ++b) {
            const auto row = logits.data.begin() + static_cast<std::ptrdiff_t>(b * k);
            const auto best = static_cast<int>(std::max_element(row, row + static_cast<std::ptrdiff_t>(k)) - row);
            if (best == data.labels[idx[b]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace mrvn
