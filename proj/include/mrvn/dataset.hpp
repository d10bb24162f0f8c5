// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "mrvn/tensor.hpp"

namespace mrvn {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Labeled samples stored contiguously; sample i occupies
/// features[i * sample_size, (i + 1) * sample_size).
struct Dataset {
    Shape sample_shape;
    std::vector<double> features;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t sample_size() const noexcept { return shape_size(sample_shape); }

    /// Gathers the given samples into a (n, as_shape...) tensor. `as_shape`
    /// must have the same element count as sample_shape.
    Tensor batch(std::span<const std::size_t> indices, const Shape& as_shape) const;
    std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
};

/// MNIST-style IDX pair: images magic 0x00000803 (u8, n x rows x cols),
/// labels magic 0x00000801 (u8, n). Big-endian headers. Pixels scale to [0,1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes an IDX pair (pixels are rounded from [0,1] to u8).
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& data);

/// Gaussian clusters with unit variance in `dims` dimensions. Class means sit
/// on a circle in the first two coordinates with neighbouring means
/// `separation` apart (for two classes: ±separation/2 on the first axis).
/// Sample i belongs to class i % classes.
Dataset generate_blobs(int classes, int samples, double separation, std::uint64_t seed, int dims = 2);

/// Rows "label,x1,x2,...". A non-numeric first row is treated as a header.
Dataset load_csv(const std::filesystem::path& path);

}  // namespace mrvn
