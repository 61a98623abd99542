// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "splitinfer/error.hpp"

namespace splitinfer {

namespace {

double checked_total(std::span<const double> ratings) {
    double total = 0.0;
    for (double r : ratings) {
        if (!std::isfinite(r) || r < 0.0) throw AllocationError("ratings must be finite and non-negative");
        total += r;
    }
    if (!(total > 0.0)) throw AllocationError("ratings sum to zero");
    return total;
}

}  // namespace

void validate_profile(const WorkerProfile& p) {
    const std::string who = "worker " + std::to_string(p.id) + ": ";
    if (!(p.frequency_mhz > 0.0)) throw DomainError(who + "frequency must be positive");
    if (!(p.bandwidth_kb_s > 0.0)) throw DomainError(who + "bandwidth must be positive");
    if (!(p.delay_per_kb_s >= 0.0) || !(p.packet_delay_s >= 0.0)) throw DomainError(who + "delays must be >= 0");
    if (!(p.flash_limit_kb > 0.0)) throw DomainError(who + "flash limit must be positive");
    if (!(p.ram_limit_kb > 0.0)) throw DomainError(who + "RAM limit must be positive");
    if (p.k_c && !(*p.k_c >= 0.0)) throw DomainError(who + "K_c must be >= 0");
    if (p.k1 && !(*p.k1 > 0.0)) throw DomainError(who + "K1 must be positive");
}

double calibrate_k1(const CalibrationRecord& rec) {
    if (!(rec.frequency_mhz > 0.0) || !(rec.workload_kb > 0.0) || !(rec.time_s > 0.0)) {
        throw DomainError("calibration record fields must be positive");
    }
    return rec.workload_kb / (rec.frequency_mhz * rec.time_s);
}

K1Table::K1Table(std::vector<K1Entry> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const K1Entry& a, const K1Entry& b) { return a.frequency_mhz < b.frequency_mhz; });
}

K1Table K1Table::from_records(std::span<const CalibrationRecord> records) {
    std::map<double, std::pair<double, std::size_t>> acc;
    for (const auto& rec : records) {
        auto& slot = acc[rec.frequency_mhz];
        slot.first += calibrate_k1(rec);
        slot.second += 1;
    }
    std::vector<K1Entry> entries;
    for (const auto& [f, sum] : acc) entries.push_back({f, sum.first / static_cast<double>(sum.second), sum.second});
    return K1Table(std::move(entries));
}

K1Lookup K1Table::lookup(double frequency_mhz) const {
    if (entries_.empty()) throw DomainError("K1 table is empty");
    const K1Entry* best = &entries_.front();
    for (const auto& e : entries_) {
        if (std::abs(e.frequency_mhz - frequency_mhz) < std::abs(best->frequency_mhz - frequency_mhz)) best = &e;
    }
    return {best->k1, best->frequency_mhz == frequency_mhz, best->frequency_mhz};
}

double rating_value(double f, double k1, double d, double bandwidth, double k_c) {
    const double fk = f * k1;
    return fk / ((d + 1.0 / bandwidth) * fk * k_c + 1.0);
}

Rating compute_rating(const WorkerProfile& p, double k1) {
    validate_profile(p);
    if (!(k1 > 0.0)) throw DomainError("K1 must be positive");
    return {p.id, rating_value(p.frequency_mhz, k1, p.effective_delay_per_kb_s(), p.bandwidth_kb_s, p.k_c.value_or(0.0))};
}

std::vector<double> allocate_weight_sizes(std::span<const double> ratings, double model_kb) {
    const double total = checked_total(ratings);
    std::vector<double> sizes(ratings.size());
    double assigned = 0.0;
    for (std::size_t i = 0; i + 1 < ratings.size(); ++i) {
        sizes[i] = ratings[i] * model_kb / total;
        assigned += sizes[i];
    }
    sizes.back() = model_kb - assigned;
    return sizes;
}

Redistribution redistribute_overflow(std::span<const double> ratings, std::span<const double> limits_kb,
                                     double model_kb) {
    if (ratings.size() != limits_kb.size()) throw AllocationError("one storage limit per worker required");
    const double total = checked_total(ratings);
    const double capacity = std::accumulate(limits_kb.begin(), limits_kb.end(), 0.0);
    if (capacity < model_kb * (1.0 - 1e-12)) throw InfeasibleCapacityError(capacity, model_kb);

    Redistribution out;
    out.ratings.assign(ratings.begin(), ratings.end());
    std::vector<bool> pinned(ratings.size(), false);
    auto overflows = [&](double size, double limit) { return size > limit * (1.0 + 1e-12) + 1e-12; };

    for (;;) {
        std::vector<double> sizes(out.ratings.size());
        for (std::size_t i = 0; i < sizes.size(); ++i) sizes[i] = out.ratings[i] * model_kb / total;

        double pool = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            if (!overflows(sizes[i], limits_kb[i])) continue;
            const double excess = (sizes[i] - limits_kb[i]) * total / model_kb;
            out.ratings[i] -= excess;
            pool += excess;
            pinned[i] = true;
            any = true;
        }
        if (!any) break;
        ++out.iterations;

        std::vector<std::size_t> receivers;
        for (std::size_t j = 0; j < sizes.size(); ++j) {
            if (!pinned[j] && sizes[j] < limits_kb[j]) receivers.push_back(j);
        }
        if (receivers.empty()) throw InfeasibleCapacityError(capacity, model_kb);
        const double share = pool / static_cast<double>(receivers.size());
        for (std::size_t j : receivers) out.ratings[j] += share;
        spdlog::debug("storage redistribution round {}: moved {:.6g} rating to {} workers", out.iterations, pool,
                      receivers.size());
    }
    out.sizes_kb = allocate_weight_sizes(out.ratings, model_kb);
    return out;
}

std::size_t LayerPartition::worker_of(std::size_t index) const {
    auto it = std::upper_bound(workers.begin(), workers.end(), index,
                               [](std::size_t i, const WorkerShare& w) { return i < w.range.end; });
    if (it == workers.end() || !it->range.contains(index)) throw BoundsError("neuron outside the partition");
    return static_cast<std::size_t>(it - workers.begin());
}

std::vector<IndexRange> LayerPartition::ranges() const {
    std::vector<IndexRange> r;
    r.reserve(workers.size());
    for (const auto& w : workers) r.push_back(w.range);
    return r;
}

std::vector<IndexRange> split_ranges(std::span<const double> ratings, std::size_t count) {
    const double total = checked_total(ratings);
    std::vector<IndexRange> ranges(ratings.size());
    double cumulative = 0.0;
    std::size_t start = 0;
    for (std::size_t r = 0; r < ratings.size(); ++r) {
        cumulative += ratings[r];
        std::size_t end = count;
        if (r + 1 < ratings.size()) {
            end = static_cast<std::size_t>(std::floor(static_cast<double>(count) * cumulative / total + 0.5));
            end = std::clamp(end, start, count);
        }
        ranges[r] = {start, end};
        if (end == start && ratings[r] > 0.0) {
            spdlog::debug("worker {} receives no neurons of a {}-neuron layer", r, count);
        }
        start = end;
    }
    return ranges;
}

LayerPartition split_conv(const ConvLayer& layer, std::span<const double> ratings, Precision precision,
                          std::size_t layer_index) {
    const std::size_t plane = layer.out_shape.plane();
    const std::size_t unit_bytes = weight_unit_bytes(Layer(layer), precision);
    LayerPartition p;
    p.layer = layer_index;
    p.neuron_count = layer.out_shape.neuron_count();
    for (const IndexRange& range : split_ranges(ratings, p.neuron_count)) {
        WorkerShare share;
        share.range = range;
        // Walk the worker's output positions; the first use of a kernel assigns it, later uses count.
        for (std::size_t i = range.begin; i < range.end; ++i) {
            const std::size_t kernel = i / plane;
            if (share.units.empty() || share.units.back().first != kernel) {
                share.units.emplace_back(kernel, 1);
            } else {
                ++share.units.back().second;
            }
        }
        share.fragment_bytes = share.units.size() * unit_bytes;
        p.workers.push_back(std::move(share));
    }
    return p;
}

LayerPartition split_linear(const LinearLayer& layer, std::span<const double> ratings, Precision precision,
                            std::size_t layer_index) {
    const std::size_t unit_bytes = weight_unit_bytes(Layer(layer), precision);
    LayerPartition p;
    p.layer = layer_index;
    p.neuron_count = layer.out_features;
    for (const IndexRange& range : split_ranges(ratings, p.neuron_count)) {
        WorkerShare share;
        share.range = range;
        for (std::size_t col = range.begin; col < range.end; ++col) share.units.emplace_back(col, 1);
        share.fragment_bytes = share.units.size() * unit_bytes;
        p.workers.push_back(std::move(share));
    }
    return p;
}

LayerPartition split_layer(const Layer& layer, std::span<const double> ratings, Precision precision,
                           std::size_t layer_index) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return split_conv(*conv, ratings, precision, layer_index);
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) return split_linear(*lin, ratings, precision, layer_index);
    throw UnsupportedOperatorError("layer " + std::to_string(layer_index) + " (" + std::string(kind_name(layer)) +
                                   ") is not split across workers");
}

}  // namespace splitinfer
