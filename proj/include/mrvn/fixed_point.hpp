// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// Signed fixed-point formats and stochastic-rounding quantization.
// Arithmetic is simulated on doubles: a quantized value is a double that lies
// on the 2^-FL grid inside the format's saturation range.

#pragma once

#include <compare>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mrvn/rng.hpp"

namespace mrvn {

/// Thrown when a NaN or infinity reaches the quantizer.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Signed fixed-point format <WL, FL>: WL total bits including the sign bit,
/// FL fractional bits. Invariant: 1 <= WL <= 32 and 0 <= FL <= WL - 1.
class FixedPointFormat {
public:
    static constexpr int kMaxWordLength = 32;

    /// Throws std::invalid_argument if the pair violates the invariant.
    FixedPointFormat(int word_length, int frac_length);

    static bool is_valid(int word_length, int frac_length) noexcept {
        return word_length >= 1 && word_length <= kMaxWordLength && frac_length >= 0 &&
               frac_length <= word_length - 1;
    }

    int word_length() const noexcept { return wl_; }
    int frac_length() const noexcept { return fl_; }
    int integer_bits() const noexcept { return wl_ - 1 - fl_; }

    /// Grid spacing 2^-FL.
    double step() const noexcept;
    /// Saturation bounds [-2^(WL-1-FL), 2^(WL-1-FL) - 2^-FL].
    std::pair<double, double> range() const noexcept;

    std::string to_string() const;

    friend bool operator==(const FixedPointFormat&, const FixedPointFormat&) = default;

private:
    int wl_;
    int fl_;
};

inline double quantization_step(const FixedPointFormat& f) { return f.step(); }
inline std::pair<double, double> representable_range(const FixedPointFormat& f) { return f.range(); }

/// Rounds x to a neighbouring grid point: up with probability equal to the
/// fractional residue, down otherwise, then saturates. Unbiased before
/// saturation.
double stochastic_round(double x, const FixedPointFormat& format, Rng& rng);

/// Stochastic rounding driven by an explicit uniform draw u in [0,1).
/// Rounds up iff u < residue.
double stochastic_round_with(double x, const FixedPointFormat& format, double u);

struct QuantizedTensor {
    std::vector<double> values;
    FixedPointFormat format;
};

QuantizedTensor quantize_tensor(std::span<const double> values, const FixedPointFormat& format, Rng& rng);

/// In-place variant used on the training hot path.
void quantize_inplace(std::span<double> values, const FixedPointFormat& format, Rng& rng);

/// True if every value is a grid multiple inside the range.
bool conforms(std::span<const double> values, const FixedPointFormat& format);

}  // namespace mrvn
