// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "splitinfer/allocator.hpp"
#include "splitinfer/model.hpp"
#include "splitinfer/receptive_field.hpp"

namespace splitinfer {

/// Bitset sized at runtime in 64-bit blocks. Fleets past 64 workers need more than a machine word.
class DynamicBitset {
public:
    DynamicBitset() = default;
    explicit DynamicBitset(std::size_t width) : width_(width), words_((width + 63) / 64, 0) {}
    DynamicBitset(std::size_t width, std::span<const std::uint64_t> words);

    std::size_t width() const noexcept { return width_; }
    const std::vector<std::uint64_t>& words() const noexcept { return words_; }

    void set(std::size_t bit);
    bool test(std::size_t bit) const;
    std::size_t count() const noexcept;
    bool none() const noexcept { return count() == 0; }
    std::vector<std::size_t> members() const;

    bool operator==(const DynamicBitset&) const = default;

private:
    std::size_t width_ = 0;
    std::vector<std::uint64_t> words_;
};

inline std::size_t bitset_words(std::size_t width) noexcept { return (width + 63) / 64; }

/// For one tensor: bit r of entry n is set when worker r of the consuming layer needs neuron n.
/// The coordinator is not a bit; `coordinator_keeps` marks tensors it must hold itself (glue
/// inputs, residual sources and the model output).
struct AssignMap {
    std::size_t neurons = 0;
    std::size_t consumers = 0;
    std::size_t words = 0;
    std::vector<std::uint64_t> bits;
    bool coordinator_keeps = false;

    AssignMap() = default;
    AssignMap(std::size_t neuron_count, std::size_t consumer_count);

    void set(std::size_t neuron, std::size_t worker);
    bool test(std::size_t neuron, std::size_t worker) const;
    std::size_t popcount(std::size_t neuron) const;
    DynamicBitset entry(std::size_t neuron) const;
    /// Neurons worker r must receive.
    std::size_t count_for(std::size_t worker) const;
    /// Sum of popcounts: activations the coordinator sends for this tensor.
    std::size_t total_deliveries() const;
};

/// The coordinator as a producer.
inline constexpr int kCoordinator = -1;

struct RouteEntry {
    int producer = kCoordinator;
    DynamicBitset consumers;
};

struct RouteRun {
    int producer = kCoordinator;
    std::size_t count = 0;
    DynamicBitset consumers;
};

/// One (producer, consumer set) entry per neuron, in the producers' range order.
class RouteMap {
public:
    RouteMap() = default;
    RouteMap(std::vector<int> producers, std::shared_ptr<const AssignMap> assign);

    std::size_t size() const noexcept { return producers_.size(); }
    RouteEntry entry(std::size_t neuron) const;
    int producer(std::size_t neuron) const { return producers_.at(neuron); }
    const AssignMap& assign() const { return *assign_; }
    /// Maximal runs of neurons sharing producer and consumer set.
    std::vector<RouteRun> runs() const;

private:
    std::vector<int> producers_;
    std::shared_ptr<const AssignMap> assign_;
};

/// Which consumers need which part of a tensor, as neuron counts. counts[p * consumers + r] is the
/// number of neurons produced by p that consumer r needs; a coordinator-produced tensor has a
/// single producer row.
struct Demand {
    std::size_t producers = 1;
    std::size_t consumers = 0;
    std::vector<std::size_t> counts;

    std::size_t from(std::size_t producer, std::size_t consumer) const {
        return counts[producer * consumers + consumer];
    }
    std::size_t need(std::size_t consumer) const;
    std::size_t total() const;
};

/// Stage 1 for one boundary. `ratings_next` derives the consuming layer's partition through
/// split_ranges; when `partition` is given, a mismatch throws ConsistencyError.
AssignMap build_assign_map(const Layer& next, std::span<const double> ratings_next,
                           const LayerPartition* partition = nullptr);
/// Same map from an explicit partition of the consuming layer.
AssignMap build_assign_map(const Layer& next, std::span<const IndexRange> next_ranges);

/// Stage 2. Empty `ranges_i` means the tensor is produced by the coordinator.
RouteMap build_route_map(std::span<const IndexRange> ranges_i, std::shared_ptr<const AssignMap> assign);
RouteMap build_route_map(const Layer& layer_i, std::span<const double> ratings_i,
                         std::shared_ptr<const AssignMap> assign);

/// Demand computed without materializing bitsets. Equal to the counts implied by the AssignMap.
Demand compute_demand(const Layer& next, std::span<const IndexRange> next_ranges,
                      std::span<const IndexRange> producer_ranges, std::size_t tensor_neurons);

/// The tensor entering layer `tensor + 1`; tensor -1 is the model input.
struct Boundary {
    long tensor = -1;
    TensorShape shape;
    /// Layer reading this tensor next; empty for the model output.
    std::optional<std::size_t> consumer_layer;
    bool consumer_split = false;
    bool coordinator_keeps = false;
    /// Producing layer's ranges; empty when the coordinator produces the tensor.
    std::vector<IndexRange> producer_ranges;
    Demand demand;
    std::shared_ptr<const AssignMap> assign;
    std::optional<RouteMap> route;
};

struct PartitionPlan {
    std::size_t workers = 0;
    Precision precision = Precision::float32;
    /// Ratings used for each layer; empty for layers the coordinator runs.
    std::vector<std::vector<double>> layer_ratings;
    std::vector<std::optional<LayerPartition>> partitions;
    /// layers + 1 entries: the input, then every layer's output.
    std::vector<Boundary> boundaries;

    const Boundary& boundary_for_tensor(long tensor) const { return boundaries.at(tensor + 1); }
    /// Bytes of weight fragments stored on each worker.
    std::vector<std::size_t> fragment_bytes() const;
    bool has_maps() const { return !boundaries.empty() && boundaries.front().assign != nullptr; }
};

struct PlanOptions {
    /// Build AssignMap/RouteMap bitsets. Demand counts are always computed.
    bool build_maps = true;
};

/// Runs the layer splitters and both routing stages over every layer. `ratings_per_layer` has
/// one vector per model layer; entries for coordinator layers are ignored.
PartitionPlan plan_all_boundaries(const Model& model, const std::vector<std::vector<double>>& ratings_per_layer,
                                  const PlanOptions& options = {});
/// Same fleet ratings for every split layer.
PartitionPlan plan_all_boundaries(const Model& model, std::span<const double> ratings,
                                  const PlanOptions& options = {});

}  // namespace splitinfer
