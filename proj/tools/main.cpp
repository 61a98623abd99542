// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

// splitinfer: plan, simulate and verify split CNN inference over a fleet of small workers.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "splitinfer/error.hpp"
#include "splitinfer/harness.hpp"
#include "splitinfer/model_io.hpp"

namespace {

using namespace splitinfer;

// Flags as typed on the command line. Only the ones given override the config file.
struct Flags {
    std::string config;
    std::string model, preset, custom_layers, custom_input, fleet, k1_table, records, input;
    std::string strategy, precision, sweep, emulate, out;
    std::size_t workers = 0;
    std::uint64_t seed = 0;
    bool serialize = false;
    bool timing_only = false;
};

void add_flags(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON file with the same keys as the flags");
    app->add_option("--model", f.model, "model JSON file");
    app->add_option("--preset", f.preset, "tiny_cnn, mobilenet_v2_like or custom, used without --model");
    app->add_option("--layers", f.custom_layers, "custom preset layers, e.g. conv:8:3:1:1:relu,gap,linear:10");
    app->add_option("--input-shape", f.custom_input, "custom preset input as C,H,W");
    app->add_option("--fleet", f.fleet, "fleet JSON file");
    app->add_option("--k1-table", f.k1_table, "K1 table JSON from calibrate");
    app->add_option("--records", f.records, "calibration CSV: frequency_mhz,workload_kb,time_s");
    app->add_option("--input", f.input, "input tensor JSON");
    app->add_option("--strategy", f.strategy, "evenly, freq_only or optimized");
    app->add_option("--precision", f.precision, "f32 or i8")->check(CLI::IsMember({"f32", "i8", "float32", "int8"}));
    app->add_option("--workers", f.workers, "worker count without a fleet file");
    app->add_option("--sweep", f.sweep, "worker counts, e.g. 1-8,10,20-120");
    app->add_option("--emulate-table2", f.emulate, "per-worker packet delays in ms, e.g. 20/5/10");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--seed", f.seed, "seed for generated weights and inputs");
    app->add_flag("--serialize-coordinator-sends", f.serialize, "coordinator sends one message at a time");
    app->add_flag("--timing-only", f.timing_only, "simulate sizes and times only, no values");
}

ExperimentConfig resolve(const CLI::App* app, const Flags& f) {
    ExperimentConfig c;
    if (!f.config.empty()) c = parse_config(read_json_file(f.config));
    auto given = [&](const char* name) { return app->count(name) > 0; };
    if (given("--model")) c.model = f.model;
    if (given("--preset")) c.preset = f.preset;
    if (given("--layers")) c.custom_layers = f.custom_layers;
    if (given("--input-shape")) {
        std::string s = f.custom_input;
        nlohmann::json dims = nlohmann::json::array();
        for (std::size_t pos = 0; pos <= s.size();) {
            const auto next = std::min(s.find(',', pos), s.size());
            dims.push_back(std::stoul(s.substr(pos, next - pos)));
            pos = next + 1;
        }
        c = parse_config({{"custom_input", dims}}, c);
    }
    if (given("--fleet")) c.fleet = f.fleet;
    if (given("--k1-table")) c.k1_table = f.k1_table;
    if (given("--records")) c.records = f.records;
    if (given("--input")) c.input = f.input;
    if (given("--strategy")) c.strategy = parse_strategy(f.strategy);
    if (given("--precision")) c.precision = parse_precision(f.precision);
    if (given("--workers")) c.workers = f.workers;
    if (given("--sweep")) c.sweep = parse_sweep(f.sweep);
    if (given("--emulate-table2")) c.packet_delay_ms = parse_delay_list(f.emulate);
    if (given("--out")) c.out = f.out;
    if (given("--seed")) c.seed = f.seed;
    if (given("--serialize-coordinator-sends")) c.serialize_coordinator_sends = true;
    if (given("--timing-only")) c.timing_only = true;
    if (c.workers == 0) throw ParseError("--workers must be at least 1");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Split CNN inference planner, simulator and verifier"};
    app.require_subcommand(1);
    std::string level = "warn";
    app.add_option("--log-level", level, "trace, debug, info, warn, error or off");

    using Command = int (*)(const ExperimentConfig&, std::ostream&);
    struct Sub {
        const char* name;
        const char* help;
        Command run;
    };
    const Sub subs[] = {
        {"plan", "rate the fleet, split every layer, write plan.json and fragments/", cmd_plan},
        {"run", "simulate one inference, write trace.csv and summary.json", cmd_run},
        {"sweep-memory", "peak per-worker memory against worker count, memory_sweep.csv", cmd_sweep_memory},
        {"calibrate", "K1 per frequency from calibration records, k1_table.json", cmd_calibrate},
        {"gen-model", "write a seeded preset model to model.json", cmd_gen_model},
        {"oracle", "dense single-node forward pass, oracle_output.json", cmd_oracle},
    };
    Flags flags;
    std::vector<std::pair<CLI::App*, Command>> commands;
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_flags(sub, flags);
        commands.emplace_back(sub, s.run);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitParse;
    }
    spdlog::set_level(spdlog::level::from_str(level));

    for (const auto& [sub, run] : commands) {
        if (!sub->parsed()) continue;
        try {
            return run(resolve(sub, flags), std::cout);
        } catch (const std::exception& e) {
            fmt::print(stderr, "error: {}\n", e.what());
            return exit_code_for(e);
        }
    }
    return kExitParse;
}
