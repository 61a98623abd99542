// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "splitinfer/model.hpp"
#include "splitinfer/oracle.hpp"
#include "splitinfer/planner.hpp"
#include "splitinfer/runtime.hpp"

namespace splitinfer {

// Process exit codes of the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;
inline constexpr int kExitInfeasible = 3;
inline constexpr int kExitOutOfMemory = 4;
inline constexpr int kExitEquivalence = 5;
/// Structural, unsupported-operator and every other modelling error.
inline constexpr int kExitModel = 6;

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e) noexcept;

struct ExperimentConfig {
    /// Model file. Empty means the generated `preset`.
    std::filesystem::path model;
    std::string preset = "tiny_cnn";
    /// Layer list for the custom preset, e.g. "conv:8:3:1:1:relu,gap,linear:10".
    std::string custom_layers;
    TensorShape custom_input{3, 8, 8};
    /// Fleet file. Empty means `workers` identical default workers.
    std::filesystem::path fleet;
    /// K1 table applied to the fleet when the fleet file brings none.
    std::filesystem::path k1_table;
    /// Calibration records, for `calibrate`.
    std::filesystem::path records;
    /// Input tensor file. Empty means a seeded random input.
    std::filesystem::path input;
    Strategy strategy = Strategy::optimized;
    /// Converts the model when set: a float model is quantized with the input as calibration data.
    std::optional<Precision> precision;
    std::size_t workers = 3;
    std::vector<std::size_t> sweep;
    /// Per-worker per-packet delays in ms, cycled over the fleet.
    std::vector<double> packet_delay_ms;
    std::filesystem::path out = "out";
    std::uint64_t seed = 42;
    bool serialize_coordinator_sends = false;
    /// Skip value propagation and the oracle check; sizes and times only.
    bool timing_only = false;
};

/// Reads a JSON config whose keys mirror the CLI flags (dashes or underscores).
ExperimentConfig parse_config(const nlohmann::json& doc, ExperimentConfig base = {});
nlohmann::json config_to_json(const ExperimentConfig& config);

Precision parse_precision(std::string_view s);
/// "20/5/10" -> {20, 5, 10}.
std::vector<double> parse_delay_list(std::string_view s);
/// Comma list of counts and inclusive ranges: "1-8,10,20-120".
std::vector<std::size_t> parse_sweep(std::string_view s);

/// Model named by the config, fused when needed and converted to the requested precision.
Model load_model(const ExperimentConfig& config);
std::vector<float> load_input(const ExperimentConfig& config, const Model& model);
/// Fleet named by the config with delay overrides applied.
Fleet load_fleet(const ExperimentConfig& config);

// Commands. Each writes its files under config.out, reports on `log` and returns an exit code.
// Errors propagate as exceptions; the CLI maps them with exit_code_for.
int cmd_plan(const ExperimentConfig& config, std::ostream& log);
int cmd_run(const ExperimentConfig& config, std::ostream& log);
int cmd_sweep_memory(const ExperimentConfig& config, std::ostream& log);
int cmd_calibrate(const ExperimentConfig& config, std::ostream& log);
int cmd_gen_model(const ExperimentConfig& config, std::ostream& log);
int cmd_oracle(const ExperimentConfig& config, std::ostream& log);

struct RunOutcome {
    std::optional<InferenceResult> result;
    std::optional<oracle::Verdict> verdict;
    /// Set when the run hit an out-of-memory fault.
    nlohmann::json fault;
    nlohmann::json summary;
    int exit_code = kExitOk;
};

/// The body of `run` without file output.
RunOutcome run_experiment(const Model& model, const Fleet& fleet, std::span<const float> input,
                          const ExperimentConfig& config);

struct MemoryPoint {
    std::size_t workers = 0;
    double max_peak_kb = 0.0;
    double ram_budget_kb = 0.0;
    double compute_s = 0.0;
    double makespan_s = 0.0;
    std::size_t total_bytes = 0;

    bool over_budget() const noexcept { return max_peak_kb > ram_budget_kb; }
};

/// One homogeneous fleet per count, copied from `prototype`; timing-only runs without RAM enforcement.
std::vector<MemoryPoint> sweep_memory(const Model& model, std::span<const std::size_t> counts,
                                      const WorkerProfile& prototype, Strategy strategy,
                                      const TimingModel& timing = {});

/// Columns: workers,max_peak_kb,ram_budget_kb,over_budget,compute_s,makespan_s,total_bytes
void write_memory_csv(std::span<const MemoryPoint> points, std::ostream& out);

}  // namespace splitinfer
