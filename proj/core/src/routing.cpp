// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/routing.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "splitinfer/error.hpp"

namespace splitinfer {

DynamicBitset::DynamicBitset(std::size_t width, std::span<const std::uint64_t> words)
    : width_(width), words_(words.begin(), words.end()) {
    if (words_.size() != bitset_words(width)) throw BoundsError("bitset block count does not match width");
}

void DynamicBitset::set(std::size_t bit) {
    if (bit >= width_) throw BoundsError("bit " + std::to_string(bit) + " outside width " + std::to_string(width_));
    words_[bit / 64] |= std::uint64_t{1} << (bit % 64);
}

bool DynamicBitset::test(std::size_t bit) const {
    if (bit >= width_) return false;
    return (words_[bit / 64] >> (bit % 64)) & 1u;
}

std::size_t DynamicBitset::count() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

std::vector<std::size_t> DynamicBitset::members() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < width_; ++i) {
        if (test(i)) out.push_back(i);
    }
    return out;
}

AssignMap::AssignMap(std::size_t neuron_count, std::size_t consumer_count)
    : neurons(neuron_count),
      consumers(consumer_count),
      words(bitset_words(consumer_count)),
      bits(neuron_count * bitset_words(consumer_count), 0) {}

void AssignMap::set(std::size_t neuron, std::size_t worker) {
    if (neuron >= neurons || worker >= consumers) throw BoundsError("AssignMap index out of range");
    bits[neuron * words + worker / 64] |= std::uint64_t{1} << (worker % 64);
}

bool AssignMap::test(std::size_t neuron, std::size_t worker) const {
    if (neuron >= neurons || worker >= consumers) return false;
    return (bits[neuron * words + worker / 64] >> (worker % 64)) & 1u;
}

std::size_t AssignMap::popcount(std::size_t neuron) const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < words; ++k) n += static_cast<std::size_t>(std::popcount(bits[neuron * words + k]));
    return n;
}

DynamicBitset AssignMap::entry(std::size_t neuron) const {
    if (neuron >= neurons) throw BoundsError("AssignMap neuron out of range");
    return DynamicBitset(consumers, std::span<const std::uint64_t>(bits.data() + neuron * words, words));
}

std::size_t AssignMap::count_for(std::size_t worker) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < neurons; ++i) n += test(i, worker) ? 1 : 0;
    return n;
}

std::size_t AssignMap::total_deliveries() const {
    std::size_t n = 0;
    for (auto w : bits) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

RouteMap::RouteMap(std::vector<int> producers, std::shared_ptr<const AssignMap> assign)
    : producers_(std::move(producers)), assign_(std::move(assign)) {
    if (!assign_ || assign_->neurons != producers_.size()) {
        throw ConsistencyError("RouteMap needs one producer per AssignMap neuron");
    }
}

RouteEntry RouteMap::entry(std::size_t neuron) const {
    return {producers_.at(neuron), assign_->entry(neuron)};
}

std::vector<RouteRun> RouteMap::runs() const {
    std::vector<RouteRun> out;
    const std::size_t w = assign_->words;
    for (std::size_t i = 0; i < producers_.size(); ++i) {
        const auto* row = assign_->bits.data() + i * w;
        if (!out.empty() && out.back().producer == producers_[i] &&
            std::equal(row, row + w, out.back().consumers.words().begin())) {
            ++out.back().count;
            continue;
        }
        out.push_back({producers_[i], 1, assign_->entry(i)});
    }
    return out;
}

std::size_t Demand::need(std::size_t consumer) const {
    std::size_t n = 0;
    for (std::size_t p = 0; p < producers; ++p) n += from(p, consumer);
    return n;
}

std::size_t Demand::total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

namespace {

// Spatial positions of one input plane, with prefix sums for range counts.
class SpatialMask {
public:
    explicit SpatialMask(std::size_t plane) : marks_(plane, 0) {}

    void mark(std::size_t pos) { marks_[pos] = 1; }
    void fill() { std::fill(marks_.begin(), marks_.end(), 1); }
    bool at(std::size_t pos) const { return marks_[pos] != 0; }

    void finish() {
        prefix_.assign(marks_.size() + 1, 0);
        for (std::size_t i = 0; i < marks_.size(); ++i) prefix_[i + 1] = prefix_[i] + marks_[i];
    }
    std::size_t count(std::size_t lo, std::size_t hi) const { return prefix_[hi] - prefix_[lo]; }
    std::size_t total() const { return prefix_.back(); }

private:
    std::vector<std::uint8_t> marks_;
    std::vector<std::size_t> prefix_;
};

// The part of a tensor one consumer worker needs: a channel interval and a spatial mask per channel.
struct NeedSet {
    std::size_t c_begin = 0;
    std::size_t c_end = 0;
    std::size_t plane = 1;
    // masks[0] applies to c_begin, masks[2] to c_end - 1, masks[1] to every channel between.
    std::vector<SpatialMask> masks;

    const SpatialMask& mask(std::size_t c) const {
        if (masks.size() == 1) return masks[0];
        if (c == c_begin) return masks[0];
        if (c + 1 == c_end) return masks[2];
        return masks[1];
    }

    std::size_t count_in(IndexRange r) const {
        if (r.empty() || c_begin >= c_end) return 0;
        const std::size_t first = std::max(r.begin / plane, c_begin);
        const std::size_t last = std::min((r.end - 1) / plane + 1, c_end);
        std::size_t n = 0;
        for (std::size_t c = first; c < last; ++c) {
            const std::size_t base = c * plane;
            const std::size_t lo = std::max(r.begin, base) - base;
            const std::size_t hi = std::min(r.end, base + plane) - base;
            n += mask(c).count(lo, hi);
        }
        return n;
    }

    template <class Fn>
    void for_each(Fn&& fn) const {
        for (std::size_t c = c_begin; c < c_end; ++c) {
            const SpatialMask& m = mask(c);
            for (std::size_t p = 0; p < plane; ++p) {
                if (m.at(p)) fn(c * plane + p);
            }
        }
    }
};

// Marks the input windows of output positions [lo, hi) of one conv output plane.
void mark_windows(const ConvLayer& l, std::size_t lo, std::size_t hi, SpatialMask& mask) {
    const TensorShape& in = l.in_shape;
    const std::size_t ow = l.out_shape.width;
    for (std::size_t pos = lo; pos < hi; ++pos) {
        const IndexRange rows = conv_window(pos / ow, l.stride, l.padding, l.kernel_h, in.height);
        const IndexRange cols = conv_window(pos % ow, l.stride, l.padding, l.kernel_w, in.width);
        for (std::size_t h = rows.begin; h < rows.end; ++h)
            for (std::size_t w = cols.begin; w < cols.end; ++w) mask.mark(h * in.width + w);
    }
}

NeedSet conv_need(const ConvLayer& l, IndexRange range) {
    NeedSet need;
    need.plane = l.in_shape.plane();
    if (range.empty()) return need;
    const std::size_t out_plane = l.out_shape.plane();
    const std::size_t oc_first = range.begin / out_plane;
    const std::size_t oc_last = (range.end - 1) / out_plane;
    auto span_in = [&](std::size_t oc) -> IndexRange {
        const std::size_t base = oc * out_plane;
        return {std::max(range.begin, base) - base, std::min(range.end, base + out_plane) - base};
    };

    if (!l.depthwise) {
        // Every output channel reads every input channel, so only the covered positions matter.
        need.c_begin = 0;
        need.c_end = l.in_shape.channels;
        SpatialMask m(need.plane);
        if (oc_last - oc_first >= 2 || range.size() >= out_plane) {
            mark_windows(l, 0, out_plane, m);
        } else {
            for (std::size_t oc = oc_first; oc <= oc_last; ++oc) {
                const IndexRange s = span_in(oc);
                mark_windows(l, s.begin, s.end, m);
            }
        }
        m.finish();
        need.masks.push_back(std::move(m));
        return need;
    }

    need.c_begin = oc_first;
    need.c_end = oc_last + 1;
    auto build = [&](std::size_t oc) {
        SpatialMask m(need.plane);
        const IndexRange s = span_in(oc);
        mark_windows(l, s.begin, s.end, m);
        m.finish();
        return m;
    };
    need.masks.push_back(build(oc_first));
    if (oc_last != oc_first) {
        SpatialMask full(need.plane);
        if (oc_last - oc_first >= 2) mark_windows(l, 0, out_plane, full);
        full.finish();
        need.masks.push_back(std::move(full));
        need.masks.push_back(build(oc_last));
    }
    return need;
}

NeedSet all_inputs(const TensorShape& in, IndexRange range) {
    NeedSet need;
    need.plane = in.plane();
    if (range.empty()) return need;
    need.c_begin = 0;
    need.c_end = in.channels;
    SpatialMask m(need.plane);
    m.fill();
    m.finish();
    need.masks.push_back(std::move(m));
    return need;
}

NeedSet need_of(const Layer& next, IndexRange range) {
    if (const auto* conv = std::get_if<ConvLayer>(&next)) return conv_need(*conv, range);
    if (const auto* lin = std::get_if<LinearLayer>(&next)) return all_inputs(lin->in_shape, range);
    throw UnsupportedOperatorError(std::string(kind_name(next)) + " layers have no worker consumers");
}

std::size_t split_neuron_count(const Layer& layer) {
    return output_shape(layer).neuron_count();
}

}  // namespace

AssignMap build_assign_map(const Layer& next, std::span<const IndexRange> next_ranges) {
    const std::size_t neurons = input_shape(next).neuron_count();
    if (!is_split_layer(next)) {
        AssignMap map(neurons, 0);
        map.coordinator_keeps = true;
        return map;
    }
    AssignMap map(neurons, next_ranges.size());
    for (std::size_t r = 0; r < next_ranges.size(); ++r) {
        need_of(next, next_ranges[r]).for_each([&](std::size_t i) { map.set(i, r); });
    }
    return map;
}

AssignMap build_assign_map(const Layer& next, std::span<const double> ratings_next,
                           const LayerPartition* partition) {
    if (!is_split_layer(next)) return build_assign_map(next, std::span<const IndexRange>{});
    const auto ranges = split_ranges(ratings_next, split_neuron_count(next));
    if (partition && partition->ranges() != ranges) {
        throw ConsistencyError("layer " + std::to_string(partition->layer) +
                               ": partition does not match the ratings it was built from");
    }
    return build_assign_map(next, ranges);
}

RouteMap build_route_map(std::span<const IndexRange> ranges_i, std::shared_ptr<const AssignMap> assign) {
    if (!assign) throw ConsistencyError("RouteMap needs an AssignMap");
    std::vector<int> producers(assign->neurons, kCoordinator);
    if (!ranges_i.empty()) {
        std::size_t covered = 0;
        for (std::size_t r = 0; r < ranges_i.size(); ++r) {
            const IndexRange& range = ranges_i[r];
            if (range.begin != covered || range.end > producers.size()) {
                throw ConsistencyError("producer ranges do not tile the tensor");
            }
            std::fill(producers.begin() + static_cast<long>(range.begin),
                      producers.begin() + static_cast<long>(range.end), static_cast<int>(r));
            covered = range.end;
        }
        if (covered != producers.size()) throw ConsistencyError("producer ranges do not tile the tensor");
    }
    return RouteMap(std::move(producers), std::move(assign));
}

RouteMap build_route_map(const Layer& layer_i, std::span<const double> ratings_i,
                         std::shared_ptr<const AssignMap> assign) {
    if (!is_split_layer(layer_i)) return build_route_map(std::span<const IndexRange>{}, std::move(assign));
    const auto ranges = split_ranges(ratings_i, split_neuron_count(layer_i));
    return build_route_map(ranges, std::move(assign));
}

Demand compute_demand(const Layer& next, std::span<const IndexRange> next_ranges,
                      std::span<const IndexRange> producer_ranges, std::size_t tensor_neurons) {
    Demand d;
    d.producers = producer_ranges.empty() ? 1 : producer_ranges.size();
    d.consumers = is_split_layer(next) ? next_ranges.size() : 0;
    d.counts.assign(d.producers * d.consumers, 0);
    for (std::size_t r = 0; r < d.consumers; ++r) {
        const NeedSet need = need_of(next, next_ranges[r]);
        if (producer_ranges.empty()) {
            d.counts[r] = need.count_in({0, tensor_neurons});
            continue;
        }
        for (std::size_t p = 0; p < d.producers; ++p) d.counts[p * d.consumers + r] = need.count_in(producer_ranges[p]);
    }
    return d;
}

std::vector<std::size_t> PartitionPlan::fragment_bytes() const {
    std::vector<std::size_t> bytes(workers, 0);
    for (const auto& p : partitions) {
        if (!p) continue;
        for (std::size_t r = 0; r < p->workers.size(); ++r) bytes[r] += p->workers[r].fragment_bytes;
    }
    return bytes;
}

PartitionPlan plan_all_boundaries(const Model& model, const std::vector<std::vector<double>>& ratings_per_layer,
                                  const PlanOptions& options) {
    if (ratings_per_layer.size() != model.size()) {
        throw AllocationError("need one rating vector per layer");
    }
    if (model.needs_fusion()) {
        throw UnsupportedOperatorError("batchnorm and standalone activations must be fused before planning");
    }
    PartitionPlan plan;
    plan.precision = model.precision();
    plan.layer_ratings.resize(model.size());
    plan.partitions.resize(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const Layer& layer = model.layer(i);
        if (!is_split_layer(layer)) continue;
        plan.layer_ratings[i] = ratings_per_layer[i];
        plan.partitions[i] = split_layer(layer, ratings_per_layer[i], model.precision(), i);
        plan.workers = std::max(plan.workers, ratings_per_layer[i].size());
    }

    std::vector<bool> residual_source(model.size(), false);
    for (const Layer& layer : model.layers()) {
        if (const auto* add = std::get_if<ResidualAddLayer>(&layer)) residual_source[add->from] = true;
    }

    for (long t = -1; t < static_cast<long>(model.size()); ++t) {
        Boundary b;
        b.tensor = t;
        b.shape = model.tensor_shape(t);
        const std::size_t neurons = b.shape.neuron_count();
        if (t >= 0 && plan.partitions[static_cast<std::size_t>(t)]) {
            b.producer_ranges = plan.partitions[static_cast<std::size_t>(t)]->ranges();
        }
        const std::size_t next = static_cast<std::size_t>(t + 1);
        std::vector<IndexRange> next_ranges;
        if (next < model.size()) {
            b.consumer_layer = next;
            b.consumer_split = is_split_layer(model.layer(next));
            if (b.consumer_split) next_ranges = plan.partitions[next]->ranges();
        }
        b.coordinator_keeps = !b.consumer_split || (t >= 0 && residual_source[static_cast<std::size_t>(t)]);

        if (b.consumer_split) {
            b.demand = compute_demand(model.layer(next), next_ranges, b.producer_ranges, neurons);
        } else {
            b.demand.producers = b.producer_ranges.empty() ? 1 : b.producer_ranges.size();
        }

        if (options.build_maps) {
            AssignMap map = b.consumer_split ? build_assign_map(model.layer(next), next_ranges) : AssignMap(neurons, 0);
            map.coordinator_keeps = b.coordinator_keeps;
            auto shared = std::make_shared<const AssignMap>(std::move(map));
            b.route = build_route_map(b.producer_ranges, shared);
            b.assign = std::move(shared);
        }
        plan.boundaries.push_back(std::move(b));
    }
    return plan;
}

PartitionPlan plan_all_boundaries(const Model& model, std::span<const double> ratings, const PlanOptions& options) {
    std::vector<std::vector<double>> per_layer(model.size(), std::vector<double>(ratings.begin(), ratings.end()));
    return plan_all_boundaries(model, per_layer, options);
}

}  // namespace splitinfer
