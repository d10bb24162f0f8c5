// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "mrvn/rng.hpp"

namespace mrvn {

Tensor Dataset::batch(std::span<const std::size_t> indices, const Shape& as_shape) const {
    const std::size_t n = sample_size();
    if (shape_size(as_shape) != n) {
        throw std::invalid_argument(fmt::format("dataset samples {} cannot be viewed as {}",
                                                shape_to_string(sample_shape), shape_to_string(as_shape)));
    }
    Shape shape{indices.size()};
    shape.insert(shape.end(), as_shape.begin(), as_shape.end());
    Tensor t(shape);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const std::size_t i = indices[k];
        if (i >= size()) throw std::out_of_range(fmt::format("sample index {} out of range", i));
        std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(i * n), n,
                    t.data.begin() + static_cast<std::ptrdiff_t>(k * n));
    }
    return t;
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels.at(i));
    return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const std::filesystem::path& path) {
    if (off + 4 > buf.size()) throw ParseError(fmt::format("'{}': truncated IDX header", path.string()));
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) | (std::uint32_t{buf[off + 2]} << 8) |
           std::uint32_t{buf[off + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                static_cast<char>(v)};
    out.write(b.data(), 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto img = read_all(images);
    const auto lab = read_all(labels);

    if (const auto magic = read_be32(img, 0, images); magic != 0x00000803) {
        throw ParseError(fmt::format("'{}': bad image magic 0x{:08x}, expected 0x00000803", images.string(), magic));
    }
    if (const auto magic = read_be32(lab, 0, labels); magic != 0x00000801) {
        throw ParseError(fmt::format("'{}': bad label magic 0x{:08x}, expected 0x00000801", labels.string(), magic));
    }
    const std::size_t n = read_be32(img, 4, images);
    const std::size_t rows = read_be32(img, 8, images);
    const std::size_t cols = read_be32(img, 12, images);
    const std::size_t n_labels = read_be32(lab, 4, labels);
    if (n != n_labels) {
        throw ParseError(fmt::format("image count {} does not match label count {}", n, n_labels));
    }
    const std::size_t pixels = rows * cols;
    if (img.size() != 16 + n * pixels) {
        throw ParseError(fmt::format("'{}': expected {} bytes of pixels, found {}", images.string(), n * pixels,
                                     img.size() < 16 ? 0 : img.size() - 16));
    }
    if (lab.size() != 8 + n) {
        throw ParseError(fmt::format("'{}': expected {} label bytes, found {}", labels.string(), n,
                                     lab.size() < 8 ? 0 : lab.size() - 8));
    }

    Dataset d;
    d.sample_shape = {rows, cols};
    d.features.resize(n * pixels);
    std::transform(img.begin() + 16, img.end(), d.features.begin(), [](unsigned char p) { return p / 255.0; });
    d.labels.assign(lab.begin() + 8, lab.end());
    const int max_label = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end());
    d.num_classes = static_cast<std::size_t>(max_label) + 1;
    return d;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& data) {
    if (data.sample_shape.size() != 2) throw std::invalid_argument("write_idx: samples must be 2-D");
    std::ofstream img(images, std::ios::binary);
    std::ofstream lab(labels, std::ios::binary);
    if (!img || !lab) throw std::runtime_error("write_idx: cannot open output files");
    write_be32(img, 0x00000803);
    write_be32(img, static_cast<std::uint32_t>(data.size()));
    write_be32(img, static_cast<std::uint32_t>(data.sample_shape[0]));
    write_be32(img, static_cast<std::uint32_t>(data.sample_shape[1]));
    for (double v : data.features) img.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    write_be32(lab, 0x00000801);
    write_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) lab.put(static_cast<char>(y));
}

// ---------------------------------------------------------------------------

Dataset generate_blobs(int classes, int samples, double separation, std::uint64_t seed, int dims) {
    if (classes < 2) throw std::invalid_argument("generate_blobs: classes must be >= 2");
    if (samples < classes) throw std::invalid_argument("generate_blobs: samples must be >= classes");
    if (dims < 2) throw std::invalid_argument("generate_blobs: dims must be >= 2");
    if (!(separation >= 0.0)) throw std::invalid_argument("generate_blobs: separation must be >= 0");

    // Neighbouring points on a circle of radius R are 2R sin(pi/k) apart.
    const double radius = separation / (2.0 * std::sin(std::numbers::pi / classes));
    std::vector<std::array<double, 2>> means(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) {
        const double angle = 2.0 * std::numbers::pi * c / classes;
        means[static_cast<std::size_t>(c)] = {radius * std::cos(angle), radius * std::sin(angle)};
    }

    Rng rng = substream(seed, Stream::Data);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.sample_shape = {static_cast<std::size_t>(dims)};
    d.num_classes = static_cast<std::size_t>(classes);
    d.features.reserve(static_cast<std::size_t>(samples * dims));
    for (int i = 0; i < samples; ++i) {
        const int c = i % classes;
        for (int j = 0; j < dims; ++j) {
            const double mean = j < 2 ? means[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] : 0.0;
            d.features.push_back(mean + normal(rng));
        }
        d.labels.push_back(c);
    }
    return d;
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open '{}'", path.string()));
    Dataset d;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    auto parse_double = [&](std::string_view tok, double& out) {
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\r')) tok.remove_suffix(1);
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
        return ec == std::errc{} && ptr == tok.data() + tok.size();
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        bool numeric = true;
        std::string_view rest = line;
        while (true) {
            const auto comma = rest.find(',');
            double v = 0.0;
            if (!parse_double(rest.substr(0, comma), v)) {
                numeric = false;
                break;
            }
            row.push_back(v);
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (!numeric) {
            if (line_no == 1) continue;  // header
            throw ParseError(fmt::format("'{}' line {}: non-numeric field", path.string(), line_no));
        }
        if (row.size() < 2) throw ParseError(fmt::format("'{}' line {}: need a label and features", path.string(), line_no));
        if (width == 0) width = row.size();
        if (row.size() != width) {
            throw ParseError(fmt::format("'{}' line {}: expected {} fields, got {}", path.string(), line_no, width,
                                         row.size()));
        }
        const double label = row.front();
        if (label < 0 || label != std::floor(label)) {
            throw ParseError(fmt::format("'{}' line {}: label must be a non-negative integer", path.string(), line_no));
        }
        d.labels.push_back(static_cast<int>(label));
        d.features.insert(d.features.end(), row.begin() + 1, row.end());
    }
    if (d.labels.empty()) throw ParseError(fmt::format("'{}': no samples", path.string()));
    d.sample_shape = {width - 1};
    d.num_classes = static_cast<std::size_t>(*std::max_element(d.labels.begin(), d.labels.end())) + 1;
    return d;
}

}  // namespace mrvn
