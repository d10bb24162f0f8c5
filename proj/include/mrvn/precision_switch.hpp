// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-layer precision control. The quantization mapping holds one
// LayerQuantState per trainable layer plus a global push-up strategy; each
// training step feeds it the quantized gradients and the batch loss.
//
//   push_down  lowest precision whose quantization keeps the weight
//              distribution within epsilon_kl bits of the float master
//   push_up    raises that minimum by an amount sized by gradient diversity
//
// Lookback and histogram resolution adapt per layer, the strategy adapts
// globally from the loss trend.

#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrvn/fixed_point.hpp"
#include "mrvn/stats.hpp"

namespace mrvn {

enum class Strategy { Min, Mean, Max };

std::string_view to_string(Strategy s) noexcept;
/// Accepts "min", "mean", "max".
std::optional<Strategy> parse_strategy(std::string_view s) noexcept;

struct Bounds {
    int lower;
    int upper;

    int clamp(int v) const noexcept { return v < lower ? lower : (v > upper ? upper : v); }
    bool contains(int v) const noexcept { return v >= lower && v <= upper; }
    friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct SwitchConfig {
    Bounds lookback_bounds{4, 64};
    Bounds resolution_bounds{8, 64};
    double gamma = 0.5;
    double epsilon_kl = 0.05;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct LayerQuantState {
    std::string name;
    FixedPointFormat format;
    int lookback;
    int resolution;
    GradientHistory grads;
};

struct QuantizationMapping {
    std::vector<LayerQuantState> layers;
    Strategy strategy = Strategy::Mean;
    std::deque<double> loss_history;
    std::size_t loss_capacity = 64;

    /// Every layer starts at `initial` with the given lookback and resolution;
    /// history capacities are the lookback upper bound.
    static QuantizationMapping create(std::span<const std::string> layer_names, FixedPointFormat initial,
                                      int lookback, int resolution, Strategy strategy, const SwitchConfig& cfg);

    LayerQuantState* find(std::string_view name) noexcept;
    const LayerQuantState* find(std::string_view name) const noexcept;

    void push_loss(double loss);
};

// ---------------------------------------------------------------------------
// PushDown

/// Integer bits (excluding sign) needed so that max|w| fits: ⌊log2 max|w|⌋ + 1,
/// floored at zero.
int integer_bits_for(std::span<const double> weights);

/// Candidate formats for push_down, indexed by FL = 0 .. min(current.FL, 31),
/// with WL = min(FL + integer_bits + 1, 32).
std::vector<FixedPointFormat> push_down_domain(std::span<const double> weights, const FixedPointFormat& current);

/// KL divergence (bits) between the r-bin histogram of `weights` and the
/// expected histogram of their stochastic rounding to `format`. Both are
/// binned over shared_range(weights). The expectation is exact: each weight
/// contributes its floor/ceil grid points weighted by the rounding law.
double information_loss(std::span<const double> weights, const FixedPointFormat& format, int resolution);

/// Lowest-FL domain format with information_loss < epsilon_kl, found by
/// bisection. When no candidate passes, returns the finest candidate.
FixedPointFormat push_down(std::span<const double> weights, const FixedPointFormat& current, int resolution,
                           double epsilon_kl);

// ---------------------------------------------------------------------------
// PushUp

struct PushUpStep {
    int s1;
    int s2;
    int s;
};

/// Precision increment. With x = log_gradient_diversity(delta_s): if x > 0,
///   s1 = max(⌈1/(x - 1)⌉, 1)   (1 when x <= 1)
///   s2 = max(⌈min(32 x² - 1, 32) - FL_min⌉, 1)
///   s  = min(s1,s2) | ⌈(s1+s2)/2⌉ | max(s1,s2) by strategy;
/// otherwise s1 = s2 = s = 1.
PushUpStep push_up_step(double delta_s, int fl_min, Strategy strategy);

/// WL = min(max(WL_min, FL_min) + 1, 32), FL = min(FL_min + s, WL - 1).
FixedPointFormat push_up(double delta_s, const FixedPointFormat& minimal, Strategy strategy);

// ---------------------------------------------------------------------------
// Adaptation

/// Loss-trend automaton over min -> mean -> max. ℒ_avg is the mean of the
/// last ⌈mean(lookbacks)⌉ losses and ℒ_current the newest one.
Strategy adapt_strategy(std::span<const double> loss_history, std::span<const int> lookbacks, Strategy current);

int adapt_lookback(double delta_s, int lookback, double gamma, Bounds bounds);

int adapt_resolution(int lookback, Bounds lookback_bounds, int resolution, Bounds resolution_bounds);

// ---------------------------------------------------------------------------
// Composition

using LayerGradients = std::map<std::string, std::vector<double>, std::less<>>;
using LayerWeightViews = std::map<std::string, std::span<const double>, std::less<>>;

struct SwitchOutcome {
    /// Names of layers whose lookback window filled and were re-quantized.
    std::vector<std::string> fired;
};

/// One step of the controller. Appends each layer's quantized gradient and the
/// loss, adapts the strategy once, then per layer adapts lookback and
/// resolution and, once the history reaches the lookback, installs
/// push_up(push_down(master)) and clears that history.
/// Throws std::invalid_argument if a layer in `q` is missing from either map.
SwitchOutcome precision_switch(LayerGradients quant_grads, double loss, QuantizationMapping& q,
                               const LayerWeightViews& master, const SwitchConfig& cfg);

}  // namespace mrvn
