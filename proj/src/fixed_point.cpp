// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/fixed_point.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace mrvn {

FixedPointFormat::FixedPointFormat(int word_length, int frac_length) : wl_(word_length), fl_(frac_length) {
    if (!is_valid(word_length, frac_length)) {
        throw std::invalid_argument(fmt::format(
            "invalid fixed-point format <{},{}>: need 1 <= WL <= 32 and 0 <= FL <= WL-1", word_length, frac_length));
    }
}

double FixedPointFormat::step() const noexcept { return std::ldexp(1.0, -fl_); }

std::pair<double, double> FixedPointFormat::range() const noexcept {
    const double half = std::ldexp(1.0, integer_bits());
    return {-half, half - step()};
}

std::string FixedPointFormat::to_string() const { return fmt::format("<{},{}>", wl_, fl_); }

double stochastic_round_with(double x, const FixedPointFormat& format, double u) {
    if (!std::isfinite(x)) {
        throw NonFiniteError(fmt::format("non-finite value {} reached the quantizer at {}", x, format.to_string()));
    }
    const auto [lo, hi] = format.range();
    // Anything beyond the range saturates regardless of the draw; this also
    // keeps the scaled value below 2^53 where floor is exact.
    if (x <= lo) return lo;
    if (x >= hi) return hi;
    const double scaled = std::ldexp(x, format.frac_length());
    const double down = std::floor(scaled);
    const double residue = scaled - down;
    const double grid = u < residue ? down + 1.0 : down;
    return std::clamp(std::ldexp(grid, -format.frac_length()), lo, hi);
}

double stochastic_round(double x, const FixedPointFormat& format, Rng& rng) {
    return stochastic_round_with(x, format, uniform01(rng));
}

QuantizedTensor quantize_tensor(std::span<const double> values, const FixedPointFormat& format, Rng& rng) {
    QuantizedTensor out{std::vector<double>(values.begin(), values.end()), format};
    quantize_inplace(out.values, format, rng);
    return out;
}

void quantize_inplace(std::span<double> values, const FixedPointFormat& format, Rng& rng) {
    for (double& v : values) {
        v = stochastic_round(v, format, rng);
    }
}

bool conforms(std::span<const double> values, const FixedPointFormat& format) {
    const auto [lo, hi] = format.range();
    return std::all_of(values.begin(), values.end(), [&](double v) {
        if (!(v >= lo && v <= hi)) return false;
        const double scaled = std::ldexp(v, format.frac_length());
        return scaled == std::floor(scaled);
    });
}

}  // namespace mrvn
