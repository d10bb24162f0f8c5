// Copyright (c) 2026, The mrvn Authors
// SPDX-License-Identifier: Apache-2.0
//
// mrvn train | eval | report | export-plots

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mrvn/checkpoint.hpp"
#include "mrvn/io.hpp"
#include "mrvn/trainer.hpp"

namespace fs = std::filesystem;
using namespace mrvn;

namespace {

int fail(const std::string& kind, const std::string& message, const std::string& field = "") {
    json j{{"error", kind}, {"message", message}};
    if (!field.empty()) j["field"] = field;
    std::cerr << j.dump() << std::endl;
    return kind == "usage" ? 2 : 1;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path.string()));
    out << j.dump(2) << '\n';
    if (!out.flush()) throw std::runtime_error(fmt::format("write to {} failed", path.string()));
}

int cmd_train(const fs::path& config_path, const fs::path& out_dir) {
    const RunConfig rc = load_run_config(config_path);
    const Dataset train_set = load_dataset(rc.train_data);
    const Dataset eval_set = rc.validation_data ? load_dataset(*rc.validation_data) : train_set;
    fs::create_directories(out_dir);

    Trainer trainer(rc.trainer, rc.architecture.input_shape, rc.architecture.layers);
    TrainingState state = trainer.initialize();
    {
        MetricsWriter writer(out_dir / "metrics.jsonl");
        trainer.run(state, train_set, [&](const MetricsEvent& e) { writer.write(e); });
    }
    save_checkpoint(out_dir / "checkpoint.bin", state);

    RunReport report;
    const auto events = read_metrics(out_dir / "metrics.jsonl");
    if (!events.empty()) {
        report = performance_report(events, rc.architecture, static_cast<std::uint64_t>(rc.trainer.batch_size));
    }
    report.quantized_accuracy = evaluate(state.net, eval_set);
    if (rc.baseline) {
        const TrainResult base =
            train(rc.trainer.float_baseline(), rc.architecture.input_shape, rc.architecture.layers, train_set);
        report.baseline_accuracy = evaluate(base.state.net, eval_set);
    }
    report.config = to_json(rc);
    write_json(out_dir / "report.json", to_json(report));
    std::cout << to_json(report).dump() << std::endl;
    return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, const std::optional<fs::path>& labels) {
    const TrainingState state = load_checkpoint(checkpoint);
    DatasetSource src = labels ? DatasetSource{IdxSource{data, *labels}} : DatasetSource{CsvSource{data}};
    const Dataset ds = load_dataset(src);
    const double acc = evaluate(state.net, ds);
    std::cout << json{{"accuracy", acc}, {"samples", ds.size()}}.dump() << std::endl;
    return 0;
}

int cmd_report(const fs::path& metrics, const fs::path& arch_path, std::optional<std::uint64_t> batch_size) {
    std::ifstream in(arch_path);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", arch_path.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(arch_path.string(), e.what());
    }
    // Accept either a bare architecture or a full run config.
    Architecture arch;
    std::uint64_t bs = 32;
    json echo = nullptr;
    if (j.is_object() && j.contains("architecture")) {
        const RunConfig rc = run_config_from_json(j, arch_path.parent_path());
        arch = rc.architecture;
        bs = static_cast<std::uint64_t>(rc.trainer.batch_size);
        echo = to_json(rc);
    } else {
        arch = architecture_from_json(j);
    }
    if (batch_size) bs = *batch_size;
    RunReport r = performance_report(read_metrics(metrics), arch, bs);
    r.config = echo;
    std::cout << to_json(r).dump() << std::endl;
    return 0;
}

int cmd_export_plots(const fs::path& metrics, const fs::path& out_dir) {
    const auto events = read_metrics(metrics);
    fs::create_directories(out_dir);
    std::map<std::string, std::pair<std::ofstream, std::ofstream>> files;
    for (const auto& e : events) {
        for (const auto& l : e.layers) {
            auto it = files.find(l.name);
            if (it == files.end()) {
                std::ofstream wl(out_dir / (l.name + "_wl.csv"), std::ios::trunc);
                std::ofstream fl(out_dir / (l.name + "_fl.csv"), std::ios::trunc);
                if (!wl || !fl) throw std::runtime_error(fmt::format("cannot write plots for '{}'", l.name));
                wl << "batch,value\n";
                fl << "batch,value\n";
                it = files.emplace(l.name, std::make_pair(std::move(wl), std::move(fl))).first;
            }
            it->second.first << e.batch << ',' << l.wl << '\n';
            it->second.second << e.batch << ',' << l.fl << '\n';
        }
    }
    for (auto& [name, f] : files) {
        if (!f.first.flush() || !f.second.flush()) throw std::runtime_error(fmt::format("write failed for '{}'", name));
    }
    std::cout << json{{"layers", files.size()}, {"rows", events.size()}}.dump() << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fixed-point training with per-layer precision switching"};
    app.require_subcommand(1);

    fs::path config, out, checkpoint, data, metrics, arch, plots_out;
    std::optional<fs::path> labels;
    std::optional<std::uint64_t> batch_size;

    auto* train = app.add_subcommand("train", "train a network and write metrics, checkpoint and report");
    train->add_option("--config", config, "run configuration (JSON)")->required();
    train->add_option("--out", out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--data", data, "IDX images (with --labels) or CSV")->required();
    eval->add_option("--labels", labels, "IDX labels");

    auto* report = app.add_subcommand("report", "performance-model report for a metrics stream");
    report->add_option("--metrics", metrics)->required();
    report->add_option("--arch", arch, "architecture or run configuration (JSON)")->required();
    report->add_option("--batch-size", batch_size);

    auto* plots = app.add_subcommand("export-plots", "per-layer WL/FL CSV series");
    plots->add_option("--metrics", metrics)->required();
    plots->add_option("--out", plots_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what());
    }

    try {
        if (*train) return cmd_train(config, out);
        if (*eval) return cmd_eval(checkpoint, data, labels);
        if (*report) return cmd_report(metrics, arch, batch_size);
        if (*plots) return cmd_export_plots(metrics, plots_out);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), e.field());
    } catch (const TrainingDiverged& e) {
        return fail("diverged", e.what(), e.layer());
    } catch (const ParseError& e) {
        return fail("parse", e.what());
    } catch (const std::exception& e) {
        return fail("runtime", e.what());
    }
    return fail("usage", "no subcommand");
}
