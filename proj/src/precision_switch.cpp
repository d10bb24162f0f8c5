// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/precision_switch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace mrvn {

std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::Min: return "min";
        case Strategy::Mean: return "mean";
        case Strategy::Max: return "max";
    }
    return "mean";
}

std::optional<Strategy> parse_strategy(std::string_view s) noexcept {
    if (s == "min") return Strategy::Min;
    if (s == "mean") return Strategy::Mean;
    if (s == "max") return Strategy::Max;
    return std::nullopt;
}

void SwitchConfig::validate() const {
    if (lookback_bounds.lower < 1 || lookback_bounds.lower > lookback_bounds.upper) {
        throw std::invalid_argument(fmt::format("lb_bounds: need 1 <= lower <= upper, got ({}, {})",
                                                lookback_bounds.lower, lookback_bounds.upper));
    }
    if (resolution_bounds.lower < 2 || resolution_bounds.lower > resolution_bounds.upper) {
        throw std::invalid_argument(fmt::format("r_bounds: need 2 <= lower <= upper, got ({}, {})",
                                                resolution_bounds.lower, resolution_bounds.upper));
    }
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument(fmt::format("gamma: must lie in (0, 1], got {}", gamma));
    }
    if (!(epsilon_kl > 0.0)) {
        throw std::invalid_argument(fmt::format("epsilon_kl: must be positive, got {}", epsilon_kl));
    }
}

QuantizationMapping QuantizationMapping::create(std::span<const std::string> layer_names, FixedPointFormat initial,
                                                int lookback, int resolution, Strategy strategy,
                                                const SwitchConfig& cfg) {
    cfg.validate();
    if (!cfg.lookback_bounds.contains(lookback)) {
        throw std::invalid_argument(fmt::format("initial lookback {} outside lb_bounds", lookback));
    }
    if (!cfg.resolution_bounds.contains(resolution)) {
        throw std::invalid_argument(fmt::format("initial resolution {} outside r_bounds", resolution));
    }
    QuantizationMapping q;
    q.strategy = strategy;
    q.loss_capacity = static_cast<std::size_t>(cfg.lookback_bounds.upper);
    for (const auto& name : layer_names) {
        if (q.find(name)) throw std::invalid_argument(fmt::format("duplicate layer name '{}'", name));
        q.layers.push_back(LayerQuantState{name, initial, lookback, resolution,
                                           GradientHistory(static_cast<std::size_t>(cfg.lookback_bounds.upper))});
    }
    return q;
}

LayerQuantState* QuantizationMapping::find(std::string_view name) noexcept {
    auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& l) { return l.name == name; });
    return it == layers.end() ? nullptr : &*it;
}

const LayerQuantState* QuantizationMapping::find(std::string_view name) const noexcept {
    auto it = std::find_if(layers.begin(), layers.end(), [&](const auto& l) { return l.name == name; });
    return it == layers.end() ? nullptr : &*it;
}

void QuantizationMapping::push_loss(double loss) {
    loss_history.push_back(loss);
    while (loss_history.size() > loss_capacity) loss_history.pop_front();
}

// ---------------------------------------------------------------------------

int integer_bits_for(std::span<const double> weights) {
    double max_abs = 0.0;
    for (double w : weights) max_abs = std::max(max_abs, std::abs(w));
    if (max_abs == 0.0) return 0;
    const int bits = static_cast<int>(std::floor(std::log2(max_abs))) + 1;
    return std::clamp(bits, 0, FixedPointFormat::kMaxWordLength - 1);
}

std::vector<FixedPointFormat> push_down_domain(std::span<const double> weights, const FixedPointFormat& current) {
    const int headroom = integer_bits_for(weights) + 1;
    const int top = std::min(current.frac_length(), FixedPointFormat::kMaxWordLength - 1);
    std::vector<FixedPointFormat> domain;
    domain.reserve(static_cast<std::size_t>(top) + 1);
    for (int fl = 0; fl <= top; ++fl) {
        domain.emplace_back(std::min(fl + headroom, FixedPointFormat::kMaxWordLength), fl);
    }
    return domain;
}

double information_loss(std::span<const double> weights, const FixedPointFormat& format, int resolution) {
    const ValueRange range = shared_range(weights);
    const Histogram p = empirical_distribution(weights, resolution, range);

    HistogramBuilder q(resolution, range);
    const auto [lo, hi] = format.range();
    const double step = format.step();
    for (double w : weights) {
        if (!std::isfinite(w)) throw NonFiniteError("information_loss: non-finite weight");
        if (w <= lo) {
            q.add(lo);
        } else if (w >= hi) {
            q.add(hi);
        } else {
            const double scaled = std::ldexp(w, format.frac_length());
            const double down = std::floor(scaled);
            const double up_prob = scaled - down;
            q.add(down * step, 1.0 - up_prob);
            if (up_prob > 0.0) q.add(std::min((down + 1.0) * step, hi), up_prob);
        }
    }
    return kl_divergence(p, q.finish());
}

FixedPointFormat push_down(std::span<const double> weights, const FixedPointFormat& current, int resolution,
                           double epsilon_kl) {
    if (weights.empty()) throw std::invalid_argument("push_down: empty weight tensor");
    if (!(epsilon_kl > 0.0)) throw std::invalid_argument("push_down: epsilon_kl must be positive");

    const auto domain = push_down_domain(weights, current);
    auto passes = [&](std::size_t i) { return information_loss(weights, domain[i], resolution) < epsilon_kl; };

    std::size_t hi = domain.size() - 1;
    if (!passes(hi)) return domain[hi];
    if (passes(0)) return domain[0];
    // passes(lo) is false and passes(hi) is true throughout.
    std::size_t lo = 0;
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        (passes(mid) ? hi : lo) = mid;
    }
    return domain[hi];
}

// ---------------------------------------------------------------------------

PushUpStep push_up_step(double delta_s, int fl_min, Strategy strategy) {
    const double x = log_gradient_diversity(delta_s);
    if (!(x > 0.0)) return {1, 1, 1};

    // Suggestions beyond 64 bits are meaningless; cap before the int cast.
    constexpr double kCap = 64.0;
    const double s1 = x > 1.0 ? std::max(std::ceil(1.0 / (x - 1.0)), 1.0) : 1.0;
    const double s2 = std::max(std::ceil(std::min(32.0 * x * x - 1.0, 32.0) - fl_min), 1.0);
    const int a = static_cast<int>(std::min(s1, kCap));
    const int b = static_cast<int>(std::min(s2, kCap));

    int s = 1;
    switch (strategy) {
        case Strategy::Min: s = std::min(a, b); break;
        case Strategy::Mean: s = (a + b + 1) / 2; break;
        case Strategy::Max: s = std::max(a, b); break;
    }
    return {a, b, s};
}

FixedPointFormat push_up(double delta_s, const FixedPointFormat& minimal, Strategy strategy) {
    const int fl_min = minimal.frac_length();
    const int s = push_up_step(delta_s, fl_min, strategy).s;
    const int wl = std::min(std::max(minimal.word_length(), fl_min) + 1, FixedPointFormat::kMaxWordLength);
    const int fl = std::min(fl_min + s, wl - 1);
    return {wl, fl};
}

// ---------------------------------------------------------------------------

Strategy adapt_strategy(std::span<const double> loss_history, std::span<const int> lookbacks, Strategy current) {
    if (loss_history.empty()) throw std::invalid_argument("adapt_strategy: empty loss history");
    std::size_t lb_avg = 1;
    if (!lookbacks.empty()) {
        const long long total = std::accumulate(lookbacks.begin(), lookbacks.end(), 0LL);
        const auto n = static_cast<long long>(lookbacks.size());
        lb_avg = static_cast<std::size_t>(std::max(1LL, (total + n - 1) / n));
    }
    const std::size_t window = std::min(lb_avg, loss_history.size());
    const auto recent = loss_history.last(window);
    const double avg = std::accumulate(recent.begin(), recent.end(), 0.0) / static_cast<double>(window);
    const double now = loss_history.back();

    if (std::abs(avg) > std::abs(now)) return Strategy::Min;
    if (current == Strategy::Mean) return Strategy::Max;
    if (current == Strategy::Min) return Strategy::Mean;
    return current;
}

int adapt_lookback(double delta_s, int lookback, double gamma, Bounds bounds) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("adapt_lookback: gamma must lie in (0, 1]");
    int target = bounds.upper;
    if (delta_s > 0.0 && std::isfinite(delta_s)) {
        const double raw = std::ceil(static_cast<double>(bounds.upper) / delta_s);
        target = bounds.clamp(static_cast<int>(std::min(raw, static_cast<double>(bounds.upper))));
    }
    // The epsilon absorbs round-off in the blend (0.3*64 + 0.7*4 = 22.000...04).
    const double blended = target * gamma + (1.0 - gamma) * lookback;
    return bounds.clamp(static_cast<int>(std::ceil(blended - 1e-9)));
}

int adapt_resolution(int lookback, Bounds lookback_bounds, int resolution, Bounds resolution_bounds) {
    if (lookback == lookback_bounds.upper) return resolution_bounds.clamp(resolution + 1);
    if (lookback == lookback_bounds.lower) return resolution_bounds.clamp(resolution - 1);
    return resolution;
}

// ---------------------------------------------------------------------------

SwitchOutcome precision_switch(LayerGradients quant_grads, double loss, QuantizationMapping& q,
                               const LayerWeightViews& master, const SwitchConfig& cfg) {
    for (const auto& layer : q.layers) {
        if (!quant_grads.contains(layer.name)) {
            throw std::invalid_argument(fmt::format("precision_switch: no gradient for layer '{}'", layer.name));
        }
        if (!master.contains(layer.name)) {
            throw std::invalid_argument(fmt::format("precision_switch: no master weights for layer '{}'", layer.name));
        }
    }

    q.push_loss(loss);
    std::vector<int> lookbacks;
    lookbacks.reserve(q.layers.size());
    for (const auto& layer : q.layers) lookbacks.push_back(layer.lookback);
    const std::vector<double> losses(q.loss_history.begin(), q.loss_history.end());
    q.strategy = adapt_strategy(losses, lookbacks, q.strategy);

    SwitchOutcome outcome;
    for (auto& layer : q.layers) {
        layer.grads.push(std::move(quant_grads.find(layer.name)->second));
        const double delta_s = gradient_diversity(layer.grads);
        layer.lookback = adapt_lookback(delta_s, layer.lookback, cfg.gamma, cfg.lookback_bounds);
        layer.resolution =
            adapt_resolution(layer.lookback, cfg.lookback_bounds, layer.resolution, cfg.resolution_bounds);

        if (layer.grads.size() >= static_cast<std::size_t>(layer.lookback)) {
            const auto weights = master.find(layer.name)->second;
            const FixedPointFormat minimal = push_down(weights, layer.format, layer.resolution, cfg.epsilon_kl);
            layer.format = push_up(delta_s, minimal, q.strategy);
            layer.grads.clear();
            outcome.fired.push_back(layer.name);
        }
    }
    return outcome;
}

}  // namespace mrvn
