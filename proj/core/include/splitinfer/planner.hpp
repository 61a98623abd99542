// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "splitinfer/allocator.hpp"
#include "splitinfer/model.hpp"
#include "splitinfer/routing.hpp"

namespace splitinfer {

/// Cycles one multiply-accumulate costs at the reference K1. With this value the
/// mobilenet_v2_like model at 112x112 int8 produces 0.133 KB of output per MCycle
/// (1,802,440 output neurons over 85,395,072 MACs).
inline constexpr double kDefaultCyclesPerMac = 155.0;

struct CostModel {
    double cycles_per_mac = kDefaultCyclesPerMac;
    double reference_k1 = kReferenceK1;
};

/// Cycles worker-side compute of one neuron of `layer` costs on a worker whose K1 is `k1`.
/// A worker that turns more cycles into output (higher K1) needs proportionally fewer.
double neuron_cycles(const Layer& layer, const CostModel& cost, double k1);

struct Fleet {
    std::vector<WorkerProfile> workers;
    /// Per-frequency K1 used when a profile carries no K1 of its own. Empty means kReferenceK1.
    K1Table k1_table;

    std::size_t size() const noexcept { return workers.size(); }
};

/// `count` identical workers with the default profile.
Fleet homogeneous_fleet(std::size_t count, const WorkerProfile& prototype = {});

/// K1 for one worker: its own override, else the table (nearest frequency, logged when inexact),
/// else kReferenceK1.
double worker_k1(const WorkerProfile& profile, const K1Table& table);

enum class Strategy { evenly, freq_only, optimized };

std::string_view to_string(Strategy s);
/// Accepts evenly, freq_only (or freq-only) and optimized. Throws ParseError otherwise.
Strategy parse_strategy(std::string_view s);

/// Per-worker traffic and work implied by a plan, without running it.
struct TrafficEstimate {
    std::vector<std::size_t> bytes_in;
    std::vector<std::size_t> bytes_out;
    std::vector<double> mcycles;
};

TrafficEstimate dry_run_traffic(const Model& model, const PartitionPlan& plan, const Fleet& fleet,
                                const CostModel& cost = {});

/// K_c(r) = KB exchanged by r / (K1_r * MCycles assigned to r); 0 when r has no work or the
/// fleet has a single worker.
std::vector<double> estimate_kc(const Model& model, const PartitionPlan& plan, const Fleet& fleet,
                                const CostModel& cost = {});

struct PlannerOptions {
    /// Rate, split, estimate K_c, re-rate: repeated this many times for the optimized strategy.
    std::size_t kc_rounds = 2;
    bool build_maps = true;
    CostModel cost;
};

struct PlanResult {
    PartitionPlan plan;
    Strategy strategy = Strategy::optimized;
    std::vector<double> k1;
    std::vector<double> kc;
    /// Ratings after storage redistribution; these drive the split.
    std::vector<double> ratings;
    std::vector<double> predicted_sizes_kb;
    std::size_t redistribution_iterations = 0;
};

/// Rates the fleet under `strategy`, redistributes against flash limits and plans every boundary.
/// Throws InfeasibleCapacityError when the fleet's flash cannot hold the model.
PlanResult plan_for_fleet(const Model& model, const Fleet& fleet, Strategy strategy,
                          const PlannerOptions& options = {});

// Fleet files: a JSON array of worker objects. delay_ms_per_kb and packet_delay_ms are in ms.
Fleet parse_fleet(const nlohmann::json& doc);
Fleet read_fleet(const std::filesystem::path& path);
nlohmann::json fleet_to_json(const Fleet& fleet);

/// Calibration records as CSV: frequency_mhz,workload_kb,time_s with an optional header line.
std::vector<CalibrationRecord> parse_calibration_csv(std::string_view text);
nlohmann::json k1_table_to_json(const K1Table& table);
K1Table parse_k1_table(const nlohmann::json& doc);

/// Plan file: ranges and fragment manifests per layer, AssignM as base64 bitset blocks and RouteM
/// as runs of [producer, count, base64 consumer set].
nlohmann::json plan_to_json(const PlanResult& result);
/// Reads back the maps of a plan file, for round-trip checks.
std::vector<RouteMap> parse_plan_routes(const nlohmann::json& doc);

/// One worker's weight fragments: owned kernels or columns with their values.
nlohmann::json worker_fragment_json(const Model& model, const PartitionPlan& plan, std::size_t worker);

}  // namespace splitinfer
