// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "mrvn/dataset.hpp"

using namespace mrvn;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mrvn_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<unsigned char> image_file(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    std::vector<unsigned char> b;
    put_be32(b, 0x00000803);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<unsigned char>(i % 256));
    return b;
}

std::vector<unsigned char> label_file(std::uint32_t n) {
    std::vector<unsigned char> b;
    put_be32(b, 0x00000801);
    put_be32(b, n);
    for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<unsigned char>(i % 10));
    return b;
}

// Nearest class mean on the first two coordinates, fitted on `fit`.
double nearest_mean_accuracy(const Dataset& fit, const Dataset& test) {
    std::vector<double> mx(fit.num_classes), my(fit.num_classes), cnt(fit.num_classes);
    const std::size_t d = fit.sample_size();
    for (std::size_t i = 0; i < fit.size(); ++i) {
        mx[fit.labels[i]] += fit.features[i * d];
        my[fit.labels[i]] += fit.features[i * d + 1];
        cnt[fit.labels[i]] += 1;
    }
    for (std::size_t c = 0; c < mx.size(); ++c) {
        mx[c] /= cnt[c];
        my[c] /= cnt[c];
    }
    std::size_t ok = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const double x = test.features[i * d], y = test.features[i * d + 1];
        std::size_t best = 0;
        double bd = 1e300;
        for (std::size_t c = 0; c < mx.size(); ++c) {
            const double dd = (x - mx[c]) * (x - mx[c]) + (y - my[c]) * (y - my[c]);
            if (dd < bd) {
                bd = dd;
                best = c;
            }
        }
        ok += static_cast<int>(best) == test.labels[i];
    }
    return static_cast<double>(ok) / test.size();
}

}  // namespace

TEST(Idx, HandBuiltTwoByThreeByFive) {
    const auto dir = tmp_dir("idx235");
    write_bytes(dir / "img", image_file(2, 3, 5));
    write_bytes(dir / "lbl", label_file(2));
    const Dataset ds = load_idx(dir / "img", dir / "lbl");
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.sample_shape, (Shape{3, 5}));
    EXPECT_EQ(ds.features.size(), 30u);
    EXPECT_DOUBLE_EQ(ds.features[29], 29.0 / 255.0);
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1}));
}

TEST(Idx, FourImageFixture) {
    const auto dir = tmp_dir("idx4");
    write_bytes(dir / "img", image_file(4, 28, 28));
    write_bytes(dir / "lbl", label_file(4));
    const Dataset ds = load_idx(dir / "img", dir / "lbl");
    EXPECT_EQ(ds.size(), 4u);
    EXPECT_EQ(ds.sample_shape, (Shape{28, 28}));
    for (double v : ds.features) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
    }
}

TEST(Idx, Errors) {
    const auto dir = tmp_dir("idxerr");
    write_bytes(dir / "img", image_file(4, 2, 2));
    write_bytes(dir / "lbl3", label_file(3));
    EXPECT_THROW(load_idx(dir / "img", dir / "lbl3"), ParseError);

    auto bad = label_file(4);
    bad[3] = 0x02;
    write_bytes(dir / "bad", bad);
    EXPECT_THROW(load_idx(dir / "img", dir / "bad"), ParseError);

    auto trunc = image_file(4, 2, 2);
    trunc.pop_back();
    write_bytes(dir / "trunc", trunc);
    write_bytes(dir / "lbl4", label_file(4));
    EXPECT_THROW(load_idx(dir / "trunc", dir / "lbl4"), ParseError);
    EXPECT_THROW(load_idx(dir / "missing", dir / "lbl4"), std::exception);
}

TEST(Idx, WriteReadRoundTrip) {
    const auto dir = tmp_dir("idxrt");
    const Dataset ds = load_idx((write_bytes(dir / "i", image_file(3, 4, 4)), dir / "i"),
                                (write_bytes(dir / "l", label_file(3)), dir / "l"));
    write_idx(dir / "i2", dir / "l2", ds);
    const Dataset back = load_idx(dir / "i2", dir / "l2");
    EXPECT_EQ(back.features, ds.features);
    EXPECT_EQ(back.labels, ds.labels);
}

TEST(Blobs, Deterministic) {
    const auto a = generate_blobs(3, 300, 5.0, 42);
    const auto b = generate_blobs(3, 300, 5.0, 42);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(generate_blobs(3, 300, 5.0, 43).features, a.features);
}

TEST(Blobs, MeansAreSeparated) {
    const auto ds = generate_blobs(2, 20000, 8.0, 1);
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) (ds.labels[i] == 0 ? m0 : m1) += ds.features[2 * i];
    m0 /= 10000;
    m1 /= 10000;
    EXPECT_NEAR(std::abs(m1 - m0), 8.0, 0.1);
}

TEST(Blobs, ReferenceClassifier) {
    const auto fit8 = generate_blobs(2, 500, 8.0, 5);
    const auto test8 = generate_blobs(2, 2000, 8.0, 6);
    EXPECT_GT(nearest_mean_accuracy(fit8, test8), 0.99);

    const auto fit0 = generate_blobs(4, 2000, 0.0, 7);
    const auto test0 = generate_blobs(4, 4000, 0.0, 8);
    // 1/4 ± 3 binomial sd over 4000 trials.
    EXPECT_NEAR(nearest_mean_accuracy(fit0, test0), 0.25, 3.0 * std::sqrt(0.25 * 0.75 / 4000));
}

TEST(Csv, ParsesWithHeader) {
    const auto dir = tmp_dir("csv");
    {
        std::ofstream out(dir / "d.csv");
        out << "label,x,y\n1,0.5,-1\n0,2,3\n";
    }
    const Dataset ds = load_csv(dir / "d.csv");
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.sample_shape, Shape{2});
    EXPECT_EQ(ds.features, (std::vector<double>{0.5, -1.0, 2.0, 3.0}));
    EXPECT_EQ(ds.num_classes, 2u);
}

TEST(Csv, RaggedRowsRejected) {
    const auto dir = tmp_dir("csvbad");
    {
        std::ofstream out(dir / "d.csv");
        out << "1,0.5,-1\n0,2\n";
    }
    EXPECT_THROW(load_csv(dir / "d.csv"), ParseError);
}
