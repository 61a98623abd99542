// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "splitinfer/model.hpp"
#include "splitinfer/receptive_field.hpp"

namespace splitinfer {

/// Ethernet frame payload used for packet accounting.
inline constexpr std::size_t kPacketBytes = 1400;

struct WorkerProfile {
    std::size_t id = 0;
    double frequency_mhz = 600.0;
    /// Communication delay per KB, in seconds.
    double delay_per_kb_s = 0.0;
    double bandwidth_kb_s = 12500.0;
    double flash_limit_kb = 8192.0;
    double ram_limit_kb = 512.0;
    /// Communication coefficient; estimated from a dry run when absent.
    std::optional<double> k_c;
    /// Fixed delay injected before every packet send/receive, in seconds.
    double packet_delay_s = 0.0;
    /// Per-worker K1 override (KB per MCycle).
    std::optional<double> k1;

    /// Delay per KB seen by the rating once per-packet delays are spread over packet payloads.
    double effective_delay_per_kb_s() const noexcept {
        return delay_per_kb_s + packet_delay_s * 1024.0 / static_cast<double>(kPacketBytes);
    }
};

/// Throws DomainError when a profile breaks f > 0, B > 0, d >= 0, S_it > 0, K_c >= 0.
void validate_profile(const WorkerProfile& p);

struct CalibrationRecord {
    double frequency_mhz = 0.0;
    double workload_kb = 0.0;
    double time_s = 0.0;
};

/// K1 = workload / (frequency * time), in KB per MCycle.
double calibrate_k1(const CalibrationRecord& rec);

struct K1Entry {
    double frequency_mhz = 0.0;
    double k1 = 0.0;
    std::size_t samples = 0;
};

struct K1Lookup {
    double k1 = 0.0;
    /// False when the value came from the nearest calibrated frequency.
    bool exact = true;
    double source_frequency_mhz = 0.0;
};

/// Per-frequency K1 averaged over calibration workloads.
class K1Table {
public:
    K1Table() = default;
    explicit K1Table(std::vector<K1Entry> entries);
    static K1Table from_records(std::span<const CalibrationRecord> records);

    const std::vector<K1Entry>& entries() const noexcept { return entries_; }
    bool empty() const noexcept { return entries_.empty(); }
    /// Nearest-frequency lookup; ties go to the lower frequency. Throws DomainError when empty.
    K1Lookup lookup(double frequency_mhz) const;

private:
    std::vector<K1Entry> entries_;
};

/// The 600 MHz calibration the default cost model is tied to.
inline constexpr double kReferenceK1 = 0.133;

struct Rating {
    std::size_t worker = 0;
    double value = 0.0;
};

/// R = f K1 / ((d + 1/B) f K1 K_c + 1), with d the effective per-KB delay and K_c from the profile
/// (0 when unset).
Rating compute_rating(const WorkerProfile& p, double k1);
double rating_value(double frequency_mhz, double k1, double delay_per_kb_s, double bandwidth_kb_s, double k_c);

/// S_i = R_i S_m / sum R. The last entry absorbs the rounding residue so the sizes sum to S_m.
std::vector<double> allocate_weight_sizes(std::span<const double> ratings, double model_kb);

struct Redistribution {
    std::vector<double> ratings;
    std::vector<double> sizes_kb;
    std::size_t iterations = 0;
};

/// Moves rating off workers whose share exceeds their storage limit, split evenly over workers
/// with spare capacity, until every share fits. Preserves the rating sum.
/// Throws InfeasibleCapacityError when the limits cannot hold the model.
Redistribution redistribute_overflow(std::span<const double> ratings, std::span<const double> limits_kb,
                                     double model_kb);

/// One worker's slice of a split layer.
struct WorkerShare {
    IndexRange range;
    /// (kernel or column index, usage count) in ascending index order.
    std::vector<std::pair<std::size_t, std::size_t>> units;
    std::size_t fragment_bytes = 0;
};

struct LayerPartition {
    std::size_t layer = 0;
    std::size_t neuron_count = 0;
    std::vector<WorkerShare> workers;

    /// Owner of output neuron `index`; workers' ranges are contiguous and ordered.
    std::size_t worker_of(std::size_t index) const;
    std::vector<IndexRange> ranges() const;
};

/// Contiguous ranges proportional to `ratings`: worker r ends at round(count * cumsum_r / total).
/// Every algorithm that derives a partition from ratings goes through this routine.
std::vector<IndexRange> split_ranges(std::span<const double> ratings, std::size_t count);

LayerPartition split_conv(const ConvLayer& layer, std::span<const double> ratings,
                          Precision precision = Precision::float32, std::size_t layer_index = 0);
LayerPartition split_linear(const LinearLayer& layer, std::span<const double> ratings,
                            Precision precision = Precision::float32, std::size_t layer_index = 0);
LayerPartition split_layer(const Layer& layer, std::span<const double> ratings, Precision precision,
                           std::size_t layer_index);

}  // namespace splitinfer
