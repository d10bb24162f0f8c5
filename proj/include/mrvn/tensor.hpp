// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrvn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != shape_size(shape)) {
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_to_string(shape));
        }
    }

    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }
    std::span<double> span() noexcept { return data; }
    std::span<const double> span() const noexcept { return data; }

    double& operator[](std::size_t i) noexcept { return data[i]; }
    double operator[](std::size_t i) const noexcept { return data[i]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace mrvn
