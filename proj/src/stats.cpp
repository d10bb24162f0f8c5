// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

namespace mrvn {

HistogramBuilder::HistogramBuilder(int resolution, ValueRange range) : range_(range) {
    if (resolution < 2) {
        throw std::invalid_argument(fmt::format("histogram resolution must be >= 2, got {}", resolution));
    }
    if (!(range.min < range.max) || !std::isfinite(range.min) || !std::isfinite(range.max)) {
        throw std::invalid_argument(fmt::format("histogram range [{}, {}] is empty", range.min, range.max));
    }
    inv_width_ = resolution / (range.max - range.min);
    counts_.assign(static_cast<std::size_t>(resolution), 0.0);
}

std::size_t HistogramBuilder::bin_of(double value) const noexcept {
    const double pos = (value - range_.min) * inv_width_;
    if (!(pos > 0.0)) return 0;
    const auto last = counts_.size() - 1;
    if (pos >= static_cast<double>(last)) return last;
    return static_cast<std::size_t>(pos);
}

void HistogramBuilder::add(double value, double weight) {
    if (!std::isfinite(value)) {
        throw std::invalid_argument("histogram input contains a non-finite value");
    }
    counts_[bin_of(value)] += weight;
}

Histogram HistogramBuilder::finish() const {
    const double total = std::accumulate(counts_.begin(), counts_.end(), 0.0);
    if (!(total > 0.0)) {
        throw std::invalid_argument("cannot build a distribution from an empty value set");
    }
    Histogram h;
    const auto r = counts_.size();
    h.bin_edges.resize(r + 1);
    const double width = (range_.max - range_.min) / static_cast<double>(r);
    for (std::size_t i = 0; i <= r; ++i) {
        h.bin_edges[i] = range_.min + width * static_cast<double>(i);
    }
    h.bin_edges[r] = range_.max;
    h.mass.resize(r);
    std::transform(counts_.begin(), counts_.end(), h.mass.begin(), [total](double c) { return c / total; });
    return h;
}

Histogram empirical_distribution(std::span<const double> values, int resolution, ValueRange range) {
    if (values.empty()) {
        throw std::invalid_argument("empirical_distribution: empty value array");
    }
    HistogramBuilder builder(resolution, range);
    for (double v : values) builder.add(v);
    return builder.finish();
}

ValueRange shared_range(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("shared_range: empty value array");
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it;
    double hi = *hi_it;
    const double span = hi - lo;
    if (span > 0.0) {
        return {lo - 0.005 * span, hi + 0.005 * span};
    }
    const double pad = std::max(1.0, std::abs(lo));
    return {lo - pad, hi + pad};
}

double kl_divergence(const Histogram& p, const Histogram& q, double smoothing) {
    if (p.bin_edges != q.bin_edges || p.mass.size() != q.mass.size()) {
        throw std::invalid_argument("kl_divergence: histograms do not share bin edges");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.mass.size(); ++i) {
        if (p.mass[i] == 0.0) continue;
        kl += p.mass[i] * std::log2((p.mass[i] + smoothing) / (q.mass[i] + smoothing));
    }
    return kl;
}

GradientHistory::GradientHistory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("gradient history capacity must be positive");
}

namespace {

long double norm_ld(const std::vector<double>& g) {
    long double sq = 0.0L;
    for (double v : g) sq += static_cast<long double>(v) * v;
    return std::sqrt(sq);
}

// Sums are carried in extended precision: r identical entries then sum
// exactly for r < 2^11, so an aligned history yields exactly 1.
double diversity_ratio(long double norm_sum, const std::vector<long double>& sum) {
    long double sq = 0.0L;
    for (long double s : sum) sq += s * s;
    const long double norm_of_sum = std::sqrt(sq);
    if (norm_of_sum == 0.0L) {
        return norm_sum > 0.0L ? kInfiniteDiversity : 1.0;
    }
    // Triangle inequality: the ratio is never below 1.
    return std::max(1.0, static_cast<double>(norm_sum / norm_of_sum));
}

}  // namespace

void GradientHistory::push(std::vector<double> gradient) {
    if (!entries_.empty() && entries_.front().size() != gradient.size()) {
        throw std::invalid_argument(fmt::format("gradient history shape mismatch: {} vs {}", gradient.size(),
                                                entries_.front().size()));
    }
    if (entries_.empty()) sum_.assign(gradient.size(), 0.0L);
    for (std::size_t i = 0; i < gradient.size(); ++i) sum_[i] += gradient[i];
    norm_sum_ += norm_ld(gradient);
    entries_.push_back(std::move(gradient));
    if (entries_.size() > capacity_) {
        while (entries_.size() > capacity_) entries_.pop_front();
        rebuild_sums();
    }
}

void GradientHistory::clear() noexcept {
    entries_.clear();
    sum_.clear();
    norm_sum_ = 0.0L;
}

void GradientHistory::set_capacity(std::size_t capacity) {
    if (capacity == 0) throw std::invalid_argument("gradient history capacity must be positive");
    capacity_ = capacity;
    if (entries_.size() > capacity_) {
        while (entries_.size() > capacity_) entries_.pop_front();
        rebuild_sums();
    }
}

void GradientHistory::rebuild_sums() {
    sum_.assign(entries_.empty() ? 0 : entries_.front().size(), 0.0L);
    norm_sum_ = 0.0L;
    for (const auto& g : entries_) {
        for (std::size_t i = 0; i < g.size(); ++i) sum_[i] += g[i];
        norm_sum_ += norm_ld(g);
    }
}

double gradient_diversity(const GradientHistory& history) {
    if (history.empty()) {
        throw std::invalid_argument("gradient_diversity: empty history");
    }
    return diversity_ratio(history.running_norm_sum(), history.running_sum());
}

double gradient_diversity(std::span<const std::vector<double>> gradients) {
    if (gradients.empty()) {
        throw std::invalid_argument("gradient_diversity: empty history");
    }
    const std::size_t n = gradients.front().size();
    std::vector<long double> sum(n, 0.0L);
    long double norm_sum = 0.0L;
    for (const auto& g : gradients) {
        if (g.size() != n) throw std::invalid_argument("gradient_diversity: inconsistent gradient shapes");
        for (std::size_t i = 0; i < n; ++i) sum[i] += g[i];
        norm_sum += norm_ld(g);
    }
    return diversity_ratio(norm_sum, sum);
}

double log_gradient_diversity(double delta_s) {
    if (delta_s > 0.0 && std::isfinite(delta_s)) return std::log(delta_s);
    return 1.0;
}

}  // namespace mrvn
