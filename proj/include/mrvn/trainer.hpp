// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Quantized SGD with per-batch precision switching. One step:
//
//   1. forward + backprop on the quantized weights
//   2. quantize the gradients to each layer's current format
//   3. precision_switch (may install new formats)
//   4. SGD update of the float master copy
//   5. re-quantize every layer with its (possibly new) format
//
// All randomness is derived from the seed and the step counter, so a run can
// be stopped, checkpointed and resumed without changing its trace.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrvn/dataset.hpp"
#include "mrvn/fixed_point.hpp"
#include "mrvn/nn.hpp"
#include "mrvn/precision_switch.hpp"

namespace mrvn {

/// Invalid configuration; `field()` names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Raised when the loss or a gradient stops being finite.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::string layer, const std::string& message)
        : std::runtime_error(message), layer_(std::move(layer)) {}
    const std::string& layer() const noexcept { return layer_; }

private:
    std::string layer_;
};

struct TrainerConfig {
    int epochs = 5;
    int batch_size = 32;
    double lr = 0.05;
    double alpha = 1e-5;
    double beta = 1e-4;
    double gamma = 0.5;
    double epsilon_kl = 0.05;
    double tnvs_scale = 1.0;
    Bounds lb_bounds{4, 64};
    Bounds r_bounds{8, 64};
    FixedPointFormat initial_format{8, 4};
    int initial_lookback = 4;
    int initial_resolution = 32;
    Strategy initial_strategy = Strategy::Mean;
    std::uint64_t seed = 0;
    bool quantize_gradients = true;
    bool precision_switching = true;

    /// Throws ConfigError.
    void validate() const;
    SwitchConfig switch_config() const;

    /// Same schedule and seed with formats pinned at <32,16>, no switching and
    /// float gradients.
    TrainerConfig float_baseline() const;

    friend bool operator==(const TrainerConfig&, const TrainerConfig&) = default;
};

struct LayerSnapshot {
    std::string name;
    int wl;
    int fl;
    int lb;
    int res;

    friend bool operator==(const LayerSnapshot&, const LayerSnapshot&) = default;
};

/// Mapping state after one batch.
struct MetricsEvent {
    std::uint32_t epoch = 0;
    std::uint64_t batch = 0;  // global step index
    double loss = 0.0;
    Strategy strategy = Strategy::Mean;
    std::vector<LayerSnapshot> layers;

    friend bool operator==(const MetricsEvent&, const MetricsEvent&) = default;
};

struct TrainingState {
    Network net;
    QuantizationMapping q;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::uint32_t epoch = 0;
    std::uint32_t batch_in_epoch = 0;
};

using MetricsSink = std::function<void(const MetricsEvent&)>;

class Trainer {
public:
    Trainer(TrainerConfig config, Shape input_shape, std::vector<LayerSpec> architecture);

    const TrainerConfig& config() const noexcept { return config_; }

    /// TNVS init, quantize at the initial format, master = copy of the
    /// quantized weights.
    TrainingState initialize() const;

    /// Continues from `state` until the configured epochs are done or
    /// `max_steps` further batches have run.
    void run(TrainingState& state, const Dataset& data, const MetricsSink& sink,
             std::optional<std::uint64_t> max_steps = std::nullopt) const;

    std::size_t batches_per_epoch(const Dataset& data) const;

private:
    void step(TrainingState& state, const Dataset& data, const std::vector<std::size_t>& order,
              const MetricsSink& sink) const;

    TrainerConfig config_;
    Shape input_shape_;
    std::vector<LayerSpec> architecture_;
};

/// Shuffled sample order for an epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint32_t epoch, std::size_t n);

/// Re-quantizes every trainable layer's master into its shadow copy using the
/// substream for `step`.
void requantize(Network& net, const QuantizationMapping& q, std::uint64_t seed, std::uint64_t step);

MetricsEvent snapshot(const TrainingState& state, double loss);

struct TrainResult {
    TrainingState state;
    std::vector<MetricsEvent> metrics;
};

TrainResult train(const TrainerConfig& config, const Shape& input_shape, const std::vector<LayerSpec>& architecture,
                  const Dataset& data);

/// Top-1 accuracy of the quantized weights.
double evaluate(const Network& net, const Dataset& data);

}  // namespace mrvn
