// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytical training-cost model. Each trainable layer's multiply-accumulate
// count is weighted by the word length it held at every batch and summed;
// ratios against an all-32-bit run give speedup, memory footprint and final
// model size. Backward passes count twice the forward MADDs (input gradient
// plus weight gradient). The float master update is not charged.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mrvn/fixed_point.hpp"
#include "mrvn/nn.hpp"

namespace mrvn {

struct MetricsEvent;

struct LayerCostProfile {
    std::uint64_t madds_forward = 0;   // per sample
    std::uint64_t madds_backward = 0;  // per sample
    std::uint64_t param_count = 0;

    friend bool operator==(const LayerCostProfile&, const LayerCostProfile&) = default;
};

using CostProfiles = std::map<std::string, LayerCostProfile, std::less<>>;

/// Closed-form counts for one layer on a per-sample input shape.
/// dense: in*out; conv: out_h*out_w*out_c*k²*in_c; relu/pool/flatten: 0.
LayerCostProfile layer_madds(const LayerSpec& spec, const Shape& input_shape);

/// Profiles of every trainable layer, keyed by layer name.
CostProfiles network_profiles(const Network& net);

/// Per layer, (batch, WL) change points; WL holds until the next point.
class WordlengthTimeline {
public:
    /// Appends a change point. Batches must strictly increase per layer and WL
    /// must lie in [1, 32]; throws std::invalid_argument otherwise.
    void add(const std::string& layer, std::uint64_t batch, int word_length);

    /// Constant WL over the whole run.
    static WordlengthTimeline uniform(const std::vector<std::string>& layers, int word_length);

    /// Word length in effect at `batch`; throws if the layer has no point at
    /// or before it.
    int at(const std::string& layer, std::uint64_t batch) const;

    const std::map<std::string, std::vector<std::pair<std::uint64_t, int>>, std::less<>>& layers() const noexcept {
        return points_;
    }

    /// Multiplies every word length (used for linearity checks).
    WordlengthTimeline scaled(int factor) const;

private:
    std::map<std::string, std::vector<std::pair<std::uint64_t, int>>, std::less<>> points_;
};

/// Change points from a metrics stream: batch b carries the WL reported in
/// the event for b.
WordlengthTimeline timeline_from_metrics(const std::vector<MetricsEvent>& events);

enum class CostWeighting { Linear, Quadratic };

/// Σ_batches Σ_layers (fwd + bwd MADDs)·batch_size·w(WL), with w(WL) = WL or
/// WL² for the quadratic multiplier-area variant. Throws std::invalid_argument
/// when a profiled layer is missing from the timeline or starts after batch 0.
double training_cost(const WordlengthTimeline& timeline, const CostProfiles& profiles, std::uint64_t batches,
                     std::uint64_t batch_size, CostWeighting weighting = CostWeighting::Linear);

/// baseline / quantized. Throws std::invalid_argument unless both are positive.
double speedup(double quant_cost, double baseline_cost);

/// Σ params·WL_final / Σ params·32.
double model_size_ratio(const std::map<std::string, FixedPointFormat, std::less<>>& final_formats,
                        const CostProfiles& profiles);

/// Batch-averaged Σ params·WL(b) / Σ params·32.
double memory_footprint_ratio(const WordlengthTimeline& timeline, const CostProfiles& profiles,
                              std::uint64_t batches);

}  // namespace mrvn
