// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Weight-distribution estimation and the two switching heuristics:
// discrete KL divergence (information loss) and gradient diversity
// (learning headroom).

#pragma once

#include <cstddef>
#include <deque>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace mrvn {

struct ValueRange {
    double min;
    double max;
};

/// Equal-width histogram normalized to unit mass.
struct Histogram {
    std::vector<double> bin_edges;  // resolution + 1, strictly increasing
    std::vector<double> mass;       // resolution

    std::size_t resolution() const noexcept { return mass.size(); }
};

/// Accumulates (possibly fractional) counts into equal-width bins. Values
/// outside the range land in the nearest edge bin.
class HistogramBuilder {
public:
    HistogramBuilder(int resolution, ValueRange range);

    void add(double value, double weight = 1.0);
    /// Throws std::invalid_argument when no mass has been added.
    Histogram finish() const;

    std::size_t bin_of(double value) const noexcept;

private:
    ValueRange range_;
    double inv_width_;
    std::vector<double> counts_;
};

/// r-bin histogram of `values` over `range`, normalized to unit mass.
Histogram empirical_distribution(std::span<const double> values, int resolution, ValueRange range);

/// Histogram range shared by a master tensor and its quantized images:
/// the tensor's [min, max] widened by 1% of the span (0.5% per side).
/// Degenerate spans widen to [min - 1, max + 1] scaled by magnitude.
ValueRange shared_range(std::span<const double> values);

inline constexpr double kKlSmoothing = 1e-9;

/// Σ p_i log2((p_i + δ) / (q_i + δ)), in bits. Both histograms must share
/// bin edges exactly.
double kl_divergence(const Histogram& p, const Histogram& q, double smoothing = kKlSmoothing);

/// Bounded ring of flattened gradient tensors, most recent last.
class GradientHistory {
public:
    explicit GradientHistory(std::size_t capacity);

    /// Drops the oldest entry when full. Throws on shape mismatch.
    void push(std::vector<double> gradient);
    void clear() noexcept;

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t capacity() const noexcept { return capacity_; }
    void set_capacity(std::size_t capacity);

    const std::deque<std::vector<double>>& entries() const noexcept { return entries_; }

    /// Running Σ_k g_k and Σ_k ‖g_k‖₂ over the current entries.
    const std::vector<long double>& running_sum() const noexcept { return sum_; }
    long double running_norm_sum() const noexcept { return norm_sum_; }

private:
    void rebuild_sums();

    std::size_t capacity_;
    std::deque<std::vector<double>> entries_;
    std::vector<long double> sum_;
    long double norm_sum_ = 0.0L;
};

inline constexpr double kInfiniteDiversity = std::numeric_limits<double>::infinity();

/// (Σ_k ‖g_k‖₂) / ‖Σ_k g_k‖₂. Returns +inf when the sum cancels to zero
/// while some gradient is nonzero, and 1 for an all-zero history.
double gradient_diversity(const GradientHistory& history);
double gradient_diversity(std::span<const std::vector<double>> gradients);

/// ln(Δs) for 0 < Δs < ∞, otherwise 1.
double log_gradient_diversity(double delta_s);

}  // namespace mrvn
