// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splitinfer/model.hpp"
#include "splitinfer/planner.hpp"
#include "splitinfer/routing.hpp"

namespace splitinfer {

enum class MessageKind { activations, partial_output, control };

/// Endpoint id of the coordinator in messages and trace events.
inline constexpr int kCoordinatorId = -1;

struct Message {
    MessageKind kind = MessageKind::activations;
    std::size_t layer = 0;
    IndexRange neurons;
    std::size_t payload_bytes = 0;
    int src = kCoordinatorId;
    int dst = kCoordinatorId;
};

inline std::size_t packet_count(std::size_t bytes) noexcept {
    return (bytes + kPacketBytes - 1) / kPacketBytes;
}

/// Link time of one packet: (d + 1/B) * KB plus the fixed per-packet delay.
double packet_seconds(const WorkerProfile& link, std::size_t bytes) noexcept;

struct TimingModel {
    CostModel cost;
    /// Coordinator sends one message at a time instead of to all workers at once.
    bool serialize_coordinator_sends = false;
};

struct RuntimeOptions {
    /// Carry activation values and compute outputs. Off, only sizes and times are simulated.
    bool compute_values = true;
    /// Raise OutOfMemoryFault when a worker's gauge passes its RAM limit.
    bool enforce_ram_limit = true;
    /// Raise DeploymentFault when a worker's fragments exceed its flash.
    bool enforce_flash_limit = true;
    /// Record per-message trace events.
    bool record_events = true;
};

/// Packet-sharing of one link: each slot serves one packet of the next pending task in rotation.
struct LinkTask {
    std::size_t id = 0;
    std::size_t packets = 0;
};

/// Task id served in each packet slot when all tasks are pending from the start.
std::vector<std::size_t> round_robin_schedule(std::span<const LinkTask> tasks);

enum class EventKind { recv_start, recv_end, compute_start, compute_end, send_start, send_end, layer_done };

std::string_view to_string(EventKind k);

struct TraceEvent {
    double time = 0.0;
    int entity = kCoordinatorId;
    EventKind kind = EventKind::recv_start;
    std::size_t layer = 0;
    std::size_t bytes = 0;
    double cycles = 0.0;
};

struct LayerWorkerStats {
    double compute_s = 0.0;
    double comm_s = 0.0;
    double cycles = 0.0;
    std::size_t peak_bytes = 0;
    std::size_t bytes_in = 0;
    std::size_t bytes_out = 0;
    std::size_t messages = 0;
    std::size_t packets = 0;
};

struct Trace {
    std::size_t workers = 0;
    std::size_t layers = 0;
    std::vector<TraceEvent> events;
    /// layers x workers, row-major.
    std::vector<LayerWorkerStats> stats;
    std::vector<std::size_t> worker_peak_bytes;
    std::vector<std::size_t> fragment_bytes;
    std::size_t coordinator_bytes_sent = 0;
    std::size_t coordinator_bytes_received = 0;
    std::size_t messages = 0;
    std::size_t packets = 0;
    double makespan_s = 0.0;

    LayerWorkerStats& at(std::size_t layer, std::size_t worker) { return stats[layer * workers + worker]; }
    const LayerWorkerStats& at(std::size_t layer, std::size_t worker) const { return stats[layer * workers + worker]; }
    std::size_t total_bytes() const noexcept { return coordinator_bytes_sent + coordinator_bytes_received; }
    std::size_t max_peak_bytes() const;
};

struct InferenceResult {
    /// Dequantized for int8 models.
    std::vector<double> output;
    Trace trace;
};

/// Layer-by-layer split execution over a simulated star network in virtual time.
/// Throws OutOfMemoryFault, DeploymentFault, ProtocolError (a worker lacked an input) and
/// BoundsError (input size).
InferenceResult execute_inference(const PartitionPlan& plan, const Model& model, std::span<const float> input,
                                  const Fleet& fleet, const TimingModel& timing = {},
                                  const RuntimeOptions& options = {});

/// Outputs of `range` of a split layer from a dense input, as a worker computes them. Reads go
/// through `present`; a missing input throws ProtocolError. Float models return values; int8
/// models take and return int8 codes.
std::vector<double> compute_assigned(const Model& model, std::size_t layer, IndexRange range,
                                     std::span<const double> input, const std::vector<bool>& present);

struct TimingReport {
    /// Per layer: the slowest worker's compute + comm (layer barrier).
    std::vector<double> layer_s;
    double total_s = 0.0;
    /// Sum over layers of the slowest worker's compute.
    double compute_s = 0.0;
    double comm_s = 0.0;
    std::vector<double> worker_compute_s;
    std::vector<double> worker_comm_s;
};

/// Barrier view of a trace: every layer waits for its slowest worker, no overlap across layers.
TimingReport simulate_timing(const Trace& trace, const Fleet& fleet, const TimingModel& timing = {});

/// Per-worker, per-layer peak KB: result[worker][layer].
std::vector<std::vector<double>> track_peak_memory(const Trace& trace);

/// Columns: layer,worker,compute_s,comm_s,peak_kb,bytes_in,bytes_out
void write_trace_csv(const Trace& trace, std::ostream& out);
nlohmann::json trace_summary(const Trace& trace);

}  // namespace splitinfer
