// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/perf_model.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

#include "mrvn/trainer.hpp"

namespace mrvn {

LayerCostProfile layer_madds(const LayerSpec& spec, const Shape& input_shape) {
    LayerSpec resolved = spec;
    const Shape out = infer_output_shape(resolved, input_shape);
    LayerCostProfile p;
    switch (resolved.kind) {
        case LayerKind::Dense:
            p.madds_forward = resolved.in_features * resolved.out_features;
            p.param_count = resolved.in_features * resolved.out_features + resolved.out_features;
            break;
        case LayerKind::Conv2d: {
            const std::uint64_t k2 = resolved.kernel * resolved.kernel;
            p.madds_forward = out[1] * out[2] * out[0] * k2 * resolved.in_channels;
            p.param_count = resolved.out_channels * resolved.in_channels * k2 + resolved.out_channels;
            break;
        }
        default: break;
    }
    p.madds_backward = 2 * p.madds_forward;
    return p;
}

CostProfiles network_profiles(const Network& net) {
    CostProfiles out;
    for (const auto& l : net.layers()) {
        if (l.spec.trainable()) out.emplace(l.name, layer_madds(l.spec, l.in_shape));
    }
    return out;
}

void WordlengthTimeline::add(const std::string& layer, std::uint64_t batch, int word_length) {
    if (word_length < 1 || word_length > FixedPointFormat::kMaxWordLength) {
        throw std::invalid_argument(fmt::format("timeline: word length {} outside [1, 32]", word_length));
    }
    auto& pts = points_[layer];
    if (!pts.empty() && pts.back().first >= batch) {
        throw std::invalid_argument(fmt::format("timeline: batch indices for '{}' must strictly increase", layer));
    }
    pts.emplace_back(batch, word_length);
}

WordlengthTimeline WordlengthTimeline::uniform(const std::vector<std::string>& layers, int word_length) {
    WordlengthTimeline t;
    for (const auto& l : layers) t.add(l, 0, word_length);
    return t;
}

int WordlengthTimeline::at(const std::string& layer, std::uint64_t batch) const {
    auto it = points_.find(layer);
    if (it == points_.end() || it->second.empty() || it->second.front().first > batch) {
        throw std::invalid_argument(fmt::format("timeline has no word length for '{}' at batch {}", layer, batch));
    }
    const auto& pts = it->second;
    auto pos = std::upper_bound(pts.begin(), pts.end(), batch,
                                [](std::uint64_t b, const auto& p) { return b < p.first; });
    return std::prev(pos)->second;
}

WordlengthTimeline WordlengthTimeline::scaled(int factor) const {
    WordlengthTimeline t;
    for (const auto& [name, pts] : points_) {
        for (const auto& [b, wl] : pts) t.points_[name].emplace_back(b, wl * factor);
    }
    return t;
}

WordlengthTimeline timeline_from_metrics(const std::vector<MetricsEvent>& events) {
    WordlengthTimeline t;
    std::map<std::string, int, std::less<>> last;
    for (const auto& e : events) {
        for (const auto& l : e.layers) {
            auto it = last.find(l.name);
            if (it == last.end() || it->second != l.wl) {
                t.add(l.name, e.batch, l.wl);
                last[l.name] = l.wl;
            }
        }
    }
    return t;
}

namespace {

// Σ over [0, batches) of weight(WL(b)) for one layer.
double weighted_batches(const std::vector<std::pair<std::uint64_t, int>>& pts, std::uint64_t batches,
                        CostWeighting weighting, const std::string& name) {
    if (pts.empty() || pts.front().first != 0) {
        throw std::invalid_argument(fmt::format("timeline gap: '{}' has no word length at batch 0", name));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size() && pts[i].first < batches; ++i) {
        const std::uint64_t end = i + 1 < pts.size() ? std::min(pts[i + 1].first, batches) : batches;
        const double wl = pts[i].second;
        const double w = weighting == CostWeighting::Linear ? wl : wl * wl;
        total += w * static_cast<double>(end - pts[i].first);
    }
    return total;
}

const std::vector<std::pair<std::uint64_t, int>>& points_for(const WordlengthTimeline& t, const std::string& name) {
    auto it = t.layers().find(name);
    if (it == t.layers().end()) {
        throw std::invalid_argument(fmt::format("timeline gap: no entries for layer '{}'", name));
    }
    return it->second;
}

}  // namespace

double training_cost(const WordlengthTimeline& timeline, const CostProfiles& profiles, std::uint64_t batches,
                     std::uint64_t batch_size, CostWeighting weighting) {
    double cost = 0.0;
    for (const auto& [name, p] : profiles) {
        const double madds = static_cast<double>(p.madds_forward + p.madds_backward) * static_cast<double>(batch_size);
        cost += madds * weighted_batches(points_for(timeline, name), batches, weighting, name);
    }
    return cost;
}

double speedup(double quant_cost, double baseline_cost) {
    if (!(quant_cost > 0.0) || !(baseline_cost > 0.0)) {
        throw std::invalid_argument("speedup: costs must be positive");
    }
    return baseline_cost / quant_cost;
}

double model_size_ratio(const std::map<std::string, FixedPointFormat, std::less<>>& final_formats,
                        const CostProfiles& profiles) {
    double bits = 0.0, full = 0.0;
    for (const auto& [name, p] : profiles) {
        auto it = final_formats.find(name);
        if (it == final_formats.end()) {
            throw std::invalid_argument(fmt::format("model_size_ratio: no final format for '{}'", name));
        }
        bits += static_cast<double>(p.param_count) * it->second.word_length();
        full += static_cast<double>(p.param_count) * FixedPointFormat::kMaxWordLength;
    }
    if (!(full > 0.0)) throw std::invalid_argument("model_size_ratio: no parameters");
    return bits / full;
}

double memory_footprint_ratio(const WordlengthTimeline& timeline, const CostProfiles& profiles,
                              std::uint64_t batches) {
    if (batches == 0) throw std::invalid_argument("memory_footprint_ratio: zero batches");
    double bits = 0.0, full = 0.0;
    for (const auto& [name, p] : profiles) {
        const double params = static_cast<double>(p.param_count);
        bits += params * weighted_batches(points_for(timeline, name), batches, CostWeighting::Linear, name);
        full += params * FixedPointFormat::kMaxWordLength * static_cast<double>(batches);
    }
    if (!(full > 0.0)) throw std::invalid_argument("memory_footprint_ratio: no parameters");
    return bits / full;
}

}  // namespace mrvn
