// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrvn/io.hpp"

#include <set>
#include <sstream>

#include <fmt/format.h>

#include "mrvn/perf_model.hpp"

namespace mrvn {
namespace {

std::string key_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void require_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected a JSON object");
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& prefix) {
    std::set<std::string> ok(known.begin(), known.end());
    for (const auto& [k, v] : j.items()) {
        if (!ok.count(k)) throw ConfigError(key_path(prefix, k), "unknown key");
    }
}

template <class T>
T get_as(const json& v, const std::string& where) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(where, "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
                    throw ConfigError(where, "must be non-negative");
                }
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(where, "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(where, "expected a string");
        }
        return v.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where, e.what());
    }
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& prefix) {
    if (auto it = j.find(key); it != j.end()) out = get_as<T>(*it, key_path(prefix, key));
}

Bounds bounds_from(const json& j, const std::string& where) {
    require_object(j, where);
    reject_unknown(j, {"lower", "upper"}, where);
    if (!j.contains("lower") || !j.contains("upper")) throw ConfigError(where, "needs lower and upper");
    return Bounds{get_as<int>(j["lower"], where + ".lower"), get_as<int>(j["upper"], where + ".upper")};
}

json to_json(const Bounds& b) { return json{{"lower", b.lower}, {"upper", b.upper}}; }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

json to_json(const TrainerConfig& c) {
    return json{
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"lr", c.lr},
        {"alpha", c.alpha},
        {"beta", c.beta},
        {"gamma", c.gamma},
        {"epsilon_kl", c.epsilon_kl},
        {"tnvs_scale", c.tnvs_scale},
        {"lb_bounds", to_json(c.lb_bounds)},
        {"r_bounds", to_json(c.r_bounds)},
        {"initial_format", json{{"wl", c.initial_format.word_length()}, {"fl", c.initial_format.frac_length()}}},
        {"initial_lookback", c.initial_lookback},
        {"initial_resolution", c.initial_resolution},
        {"initial_strategy", std::string(to_string(c.initial_strategy))},
        {"seed", c.seed},
        {"quantize_gradients", c.quantize_gradients},
        {"precision_switching", c.precision_switching},
    };
}

TrainerConfig trainer_config_from_json(const json& j, const std::string& prefix) {
    require_object(j, prefix);
    reject_unknown(j,
                   {"epochs", "batch_size", "lr", "alpha", "beta", "gamma", "epsilon_kl", "tnvs_scale", "lb_bounds",
                    "r_bounds", "initial_format", "initial_lookback", "initial_resolution", "initial_strategy", "seed",
                    "quantize_gradients", "precision_switching"},
                   prefix);
    TrainerConfig c;
    read_opt(j, "epochs", c.epochs, prefix);
    read_opt(j, "batch_size", c.batch_size, prefix);
    read_opt(j, "lr", c.lr, prefix);
    read_opt(j, "alpha", c.alpha, prefix);
    read_opt(j, "beta", c.beta, prefix);
    read_opt(j, "gamma", c.gamma, prefix);
    read_opt(j, "epsilon_kl", c.epsilon_kl, prefix);
    read_opt(j, "tnvs_scale", c.tnvs_scale, prefix);
    read_opt(j, "initial_lookback", c.initial_lookback, prefix);
    read_opt(j, "initial_resolution", c.initial_resolution, prefix);
    read_opt(j, "seed", c.seed, prefix);
    read_opt(j, "quantize_gradients", c.quantize_gradients, prefix);
    read_opt(j, "precision_switching", c.precision_switching, prefix);
    if (auto it = j.find("lb_bounds"); it != j.end()) c.lb_bounds = bounds_from(*it, key_path(prefix, "lb_bounds"));
    if (auto it = j.find("r_bounds"); it != j.end()) c.r_bounds = bounds_from(*it, key_path(prefix, "r_bounds"));
    if (auto it = j.find("initial_strategy"); it != j.end()) {
        const auto where = key_path(prefix, "initial_strategy");
        const auto s = parse_strategy(get_as<std::string>(*it, where));
        if (!s) throw ConfigError(where, "expected one of min, mean, max");
        c.initial_strategy = *s;
    }
    if (auto it = j.find("initial_format"); it != j.end()) {
        const auto where = key_path(prefix, "initial_format");
        require_object(*it, where);
        reject_unknown(*it, {"wl", "fl"}, where);
        int wl = c.initial_format.word_length();
        int fl = c.initial_format.frac_length();
        read_opt(*it, "wl", wl, where);
        read_opt(*it, "fl", fl, where);
        if (wl < 1 || wl > FixedPointFormat::kMaxWordLength) throw ConfigError(where + ".wl", "must lie in [1, 32]");
        if (fl < 0 || fl >= wl) throw ConfigError(where + ".fl", fmt::format("must lie in [0, wl - 1] (wl = {})", wl));
        c.initial_format = FixedPointFormat{wl, fl};
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(key_path(prefix, e.field()), e.what());
    }
    return c;
}

json to_json(const Architecture& a) {
    json layers = json::array();
    for (const auto& s : a.layers) {
        json l{{"type", std::string(to_string(s.kind))}};
        switch (s.kind) {
            case LayerKind::Dense:
                l["out_features"] = s.out_features;
                if (s.in_features) l["in_features"] = s.in_features;
                break;
            case LayerKind::Conv2d:
                l["out_channels"] = s.out_channels;
                l["kernel"] = s.kernel;
                l["stride"] = s.stride;
                if (s.in_channels) l["in_channels"] = s.in_channels;
                break;
            case LayerKind::MaxPool: l["size"] = s.pool; break;
            default: break;
        }
        layers.push_back(std::move(l));
    }
    return json{{"input_shape", a.input_shape}, {"layers", std::move(layers)}};
}

Architecture architecture_from_json(const json& j, const std::string& prefix) {
    require_object(j, prefix);
    reject_unknown(j, {"input_shape", "layers"}, prefix);
    Architecture a;
    const auto shape_key = key_path(prefix, "input_shape");
    if (!j.contains("input_shape") || !j["input_shape"].is_array() || j["input_shape"].empty()) {
        throw ConfigError(shape_key, "expected a non-empty array of positive integers");
    }
    for (std::size_t i = 0; i < j["input_shape"].size(); ++i) {
        const auto d = get_as<std::size_t>(j["input_shape"][i], fmt::format("{}[{}]", shape_key, i));
        if (d == 0) throw ConfigError(fmt::format("{}[{}]", shape_key, i), "must be positive");
        a.input_shape.push_back(d);
    }
    const auto layers_key = key_path(prefix, "layers");
    if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty()) {
        throw ConfigError(layers_key, "expected a non-empty array");
    }
    for (std::size_t i = 0; i < j["layers"].size(); ++i) {
        const json& l = j["layers"][i];
        const auto where = fmt::format("{}[{}]", layers_key, i);
        require_object(l, where);
        if (!l.contains("type")) throw ConfigError(where + ".type", "missing");
        const auto kind = parse_layer_kind(get_as<std::string>(l["type"], where + ".type"));
        if (!kind) throw ConfigError(where + ".type", "expected dense, conv2d, relu, maxpool or flatten");
        LayerSpec s;
        s.kind = *kind;
        auto positive = [&](const char* key, std::size_t& out, bool required) {
            if (!l.contains(key)) {
                if (required) throw ConfigError(where + "." + key, "missing");
                return;
            }
            out = get_as<std::size_t>(l[key], where + "." + key);
            if (out == 0) throw ConfigError(where + "." + key, "must be positive");
        };
        switch (s.kind) {
            case LayerKind::Dense:
                reject_unknown(l, {"type", "out_features", "in_features"}, where);
                positive("out_features", s.out_features, true);
                positive("in_features", s.in_features, false);
                break;
            case LayerKind::Conv2d:
                reject_unknown(l, {"type", "out_channels", "kernel", "stride", "in_channels"}, where);
                positive("out_channels", s.out_channels, true);
                positive("kernel", s.kernel, true);
                positive("stride", s.stride, false);
                positive("in_channels", s.in_channels, false);
                break;
            case LayerKind::MaxPool:
                reject_unknown(l, {"type", "size"}, where);
                positive("size", s.pool, false);
                break;
            default: reject_unknown(l, {"type"}, where); break;
        }
        a.layers.push_back(s);
    }
    try {
        (void)Network::build(a.input_shape, a.layers);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(layers_key, e.what());
    }
    return a;
}

json to_json(const DatasetSource& s) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, BlobsSource>) {
                return json{{"kind", "blobs"},         {"classes", v.classes}, {"samples", v.samples},
                            {"separation", v.separation}, {"seed", v.seed},       {"dims", v.dims}};
            } else if constexpr (std::is_same_v<T, IdxSource>) {
                return json{{"kind", "idx"}, {"images", v.images.string()}, {"labels", v.labels.string()}};
            } else {
                return json{{"kind", "csv"}, {"path", v.path.string()}};
            }
        },
        s);
}

DatasetSource dataset_source_from_json(const json& j, const std::filesystem::path& base_dir,
                                       const std::string& prefix) {
    require_object(j, prefix);
    if (!j.contains("kind")) throw ConfigError(key_path(prefix, "kind"), "missing");
    const auto kind = get_as<std::string>(j["kind"], key_path(prefix, "kind"));
    if (kind == "blobs") {
        reject_unknown(j, {"kind", "classes", "samples", "separation", "seed", "dims"}, prefix);
        BlobsSource b;
        read_opt(j, "classes", b.classes, prefix);
        read_opt(j, "samples", b.samples, prefix);
        read_opt(j, "separation", b.separation, prefix);
        read_opt(j, "seed", b.seed, prefix);
        read_opt(j, "dims", b.dims, prefix);
        if (b.classes < 2) throw ConfigError(key_path(prefix, "classes"), "must be >= 2");
        if (b.samples < b.classes) throw ConfigError(key_path(prefix, "samples"), "must be >= classes");
        if (!(b.separation >= 0.0)) throw ConfigError(key_path(prefix, "separation"), "must be >= 0");
        if (b.dims < 2) throw ConfigError(key_path(prefix, "dims"), "must be >= 2");
        return b;
    }
    if (kind == "idx") {
        reject_unknown(j, {"kind", "images", "labels"}, prefix);
        for (const char* k : {"images", "labels"}) {
            if (!j.contains(k)) throw ConfigError(key_path(prefix, k), "missing");
        }
        return IdxSource{resolve(base_dir, get_as<std::string>(j["images"], key_path(prefix, "images"))),
                         resolve(base_dir, get_as<std::string>(j["labels"], key_path(prefix, "labels")))};
    }
    if (kind == "csv") {
        reject_unknown(j, {"kind", "path"}, prefix);
        if (!j.contains("path")) throw ConfigError(key_path(prefix, "path"), "missing");
        return CsvSource{resolve(base_dir, get_as<std::string>(j["path"], key_path(prefix, "path")))};
    }
    throw ConfigError(key_path(prefix, "kind"), "expected blobs, idx or csv");
}

Dataset load_dataset(const DatasetSource& s) {
    auto must_exist = [](const std::filesystem::path& p) {
        if (!std::filesystem::exists(p)) throw std::runtime_error(fmt::format("file not found: {}", p.string()));
    };
    return std::visit(
        [&](const auto& v) -> Dataset {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, BlobsSource>) {
                return generate_blobs(v.classes, v.samples, v.separation, v.seed, v.dims);
            } else if constexpr (std::is_same_v<T, IdxSource>) {
                must_exist(v.images);
                must_exist(v.labels);
                return load_idx(v.images, v.labels);
            } else {
                must_exist(v.path);
                return load_csv(v.path);
            }
        },
        s);
}

json to_json(const RunConfig& c) {
    json j{{"trainer", to_json(c.trainer)},
           {"architecture", to_json(c.architecture)},
           {"train_data", to_json(c.train_data)}};
    if (c.validation_data) j["validation_data"] = to_json(*c.validation_data);
    j["baseline"] = c.baseline;
    return j;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    require_object(j, "");
    reject_unknown(j, {"trainer", "architecture", "train_data", "validation_data", "baseline"}, "");
    for (const char* k : {"architecture", "train_data"}) {
        if (!j.contains(k)) throw ConfigError(k, "missing");
    }
    RunConfig c{
        j.contains("trainer") ? trainer_config_from_json(j["trainer"], "trainer") : TrainerConfig{},
        architecture_from_json(j["architecture"], "architecture"),
        dataset_source_from_json(j["train_data"], base_dir, "train_data"),
        std::nullopt,
        true,
    };
    if (j.contains("validation_data")) {
        c.validation_data = dataset_source_from_json(j["validation_data"], base_dir, "validation_data");
    }
    read_opt(j, "baseline", c.baseline, "");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open config {}", path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------

json to_json(const MetricsEvent& e) {
    json layers = json::array();
    for (const auto& l : e.layers) {
        layers.push_back(json{{"name", l.name}, {"wl", l.wl}, {"fl", l.fl}, {"lb", l.lb}, {"res", l.res}});
    }
    return json{{"epoch", e.epoch},
                {"batch", e.batch},
                {"loss", e.loss},
                {"strategy", std::string(to_string(e.strategy))},
                {"layers", std::move(layers)}};
}

MetricsEvent metrics_event_from_json(const json& j) {
    try {
        MetricsEvent e;
        e.epoch = j.at("epoch").get<std::uint32_t>();
        e.batch = j.at("batch").get<std::uint64_t>();
        e.loss = j.at("loss").get<double>();
        const auto s = parse_strategy(j.at("strategy").get<std::string>());
        if (!s) throw ParseError("metrics: unknown strategy");
        e.strategy = *s;
        for (const auto& l : j.at("layers")) {
            e.layers.push_back({l.at("name").get<std::string>(), l.at("wl").get<int>(), l.at("fl").get<int>(),
                                l.at("lb").get<int>(), l.at("res").get<int>()});
        }
        return e;
    } catch (const json::exception& ex) {
        throw ParseError(fmt::format("metrics: {}", ex.what()));
    }
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc), path_(path) {
    if (!out_) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
}

void MetricsWriter::write(const MetricsEvent& e) {
    out_ << to_json(e).dump() << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error(fmt::format("write to {} failed", path_.string()));
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsEvent>& events) {
    MetricsWriter w(path);
    for (const auto& e : events) w.write(e);
}

std::vector<MetricsEvent> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open metrics {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    std::vector<MetricsEvent> out;
    std::size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const bool complete = nl != std::string::npos;
        const std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
        pos = complete ? nl + 1 : text.size();
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(metrics_event_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            if (!complete) break;  // torn final write
            throw ParseError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

json to_json(const RunReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"quantized_accuracy", opt(r.quantized_accuracy)},
                {"baseline_accuracy", opt(r.baseline_accuracy)},
                {"delta", opt(r.delta())},
                {"speedup", r.speedup},
                {"memory_ratio", r.memory_ratio},
                {"size_ratio", r.size_ratio},
                {"batches", r.batches},
                {"config", r.config}};
}

RunReport performance_report(const std::vector<MetricsEvent>& events, const Architecture& arch,
                             std::uint64_t batch_size) {
    if (events.empty()) throw std::invalid_argument("report: metrics stream is empty");
    const Network net = Network::build(arch.input_shape, arch.layers);
    const CostProfiles profiles = network_profiles(net);
    const WordlengthTimeline timeline = timeline_from_metrics(events);
    const std::uint64_t batches = events.back().batch + 1;

    const auto names = net.trainable_names();
    const double quant = training_cost(timeline, profiles, batches, batch_size);
    const double full = training_cost(WordlengthTimeline::uniform(names, FixedPointFormat::kMaxWordLength), profiles,
                                      batches, batch_size);
    std::map<std::string, FixedPointFormat, std::less<>> final_formats;
    for (const auto& l : events.back().layers) final_formats.emplace(l.name, FixedPointFormat{l.wl, l.fl});

    RunReport r;
    r.speedup = speedup(quant, full);
    r.memory_ratio = memory_footprint_ratio(timeline, profiles, batches);
    r.size_ratio = model_size_ratio(final_formats, profiles);
    r.batches = batches;
    return r;
}

}  // namespace mrvn
