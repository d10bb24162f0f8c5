// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration, JSONL metrics, and the run report.

#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mrvn/dataset.hpp"
#include "mrvn/nn.hpp"
#include "mrvn/trainer.hpp"

namespace mrvn {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration

json to_json(const TrainerConfig& c);
/// Missing keys keep their defaults; unknown keys and bad values throw
/// ConfigError naming the key path (e.g. "initial_format.fl").
TrainerConfig trainer_config_from_json(const json& j, const std::string& prefix = "");

struct Architecture {
    Shape input_shape;
    std::vector<LayerSpec> layers;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

json to_json(const Architecture& a);
Architecture architecture_from_json(const json& j, const std::string& prefix = "");

struct BlobsSource {
    int classes = 2;
    int samples = 500;
    double separation = 8.0;
    std::uint64_t seed = 0;
    int dims = 2;
    friend bool operator==(const BlobsSource&, const BlobsSource&) = default;
};

struct IdxSource {
    std::filesystem::path images;
    std::filesystem::path labels;
    friend bool operator==(const IdxSource&, const IdxSource&) = default;
};

struct CsvSource {
    std::filesystem::path path;
    friend bool operator==(const CsvSource&, const CsvSource&) = default;
};

using DatasetSource = std::variant<BlobsSource, IdxSource, CsvSource>;

json to_json(const DatasetSource& s);
/// Relative paths resolve against `base_dir`.
DatasetSource dataset_source_from_json(const json& j, const std::filesystem::path& base_dir,
                                       const std::string& prefix = "");
/// Throws std::runtime_error for missing files, ParseError for bad content.
Dataset load_dataset(const DatasetSource& s);

struct RunConfig {
    TrainerConfig trainer;
    Architecture architecture;
    DatasetSource train_data;
    std::optional<DatasetSource> validation_data;
    bool baseline = true;  // also train the float-pinned baseline for the report
};

json to_json(const RunConfig& c);
RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir);
/// Reads and parses a config file; syntax errors surface as ConfigError("<file>", ...).
RunConfig load_run_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Metrics

json to_json(const MetricsEvent& e);
MetricsEvent metrics_event_from_json(const json& j);

/// Appends one JSON line per event and flushes after each.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);
    void write(const MetricsEvent& e);

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsEvent>& events);

/// Parses every complete line. A final line without a trailing newline that
/// fails to parse is dropped; any other malformed line throws ParseError.
std::vector<MetricsEvent> read_metrics(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Report

struct RunReport {
    std::optional<double> quantized_accuracy;
    std::optional<double> baseline_accuracy;
    double speedup = 1.0;
    double memory_ratio = 1.0;
    double size_ratio = 1.0;
    std::uint64_t batches = 0;
    json config;  // echo, may be null

    std::optional<double> delta() const {
        if (!quantized_accuracy || !baseline_accuracy) return std::nullopt;
        return *quantized_accuracy - *baseline_accuracy;
    }
};

json to_json(const RunReport& r);

/// Speedup, memory and size ratios of a metrics stream on an architecture.
RunReport performance_report(const std::vector<MetricsEvent>& events, const Architecture& arch,
                             std::uint64_t batch_size);

}  // namespace mrvn
