// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "splitinfer/model.hpp"

namespace splitinfer {

/// Half-open index interval [begin, end).
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
    bool empty() const noexcept { return end <= begin; }
    bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
    bool operator==(const IndexRange&) const = default;
};

/// The input neurons one output neuron reads, as a box in the input tensor after padding clipping.
struct ReceptiveField {
    IndexRange channels;
    IndexRange rows;
    IndexRange cols;

    std::size_t size() const noexcept { return channels.size() * rows.size() * cols.size(); }
    bool contains(std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return channels.contains(c) && rows.contains(h) && cols.contains(w);
    }

    /// Calls fn(flat_input_index) for every member, channel-major.
    template <class Fn>
    void for_each(const TensorShape& in, Fn&& fn) const {
        for (std::size_t c = channels.begin; c < channels.end; ++c)
            for (std::size_t h = rows.begin; h < rows.end; ++h)
                for (std::size_t w = cols.begin; w < cols.end; ++w) fn(in.index(c, h, w));
    }
};

/// Spatial window rows/cols of a conv output position, clipped to the input.
IndexRange conv_window(std::size_t out_pos, std::size_t stride, std::size_t padding, std::size_t kernel,
                       std::size_t in_extent) noexcept;

/// Exact set of inputs needed by output (c, h, w). Throws BoundsError outside out_shape.
ReceptiveField get_input(const ConvLayer& layer, std::size_t c, std::size_t h, std::size_t w);
/// Linear outputs depend on every input.
ReceptiveField get_input(const LinearLayer& layer, std::size_t c, std::size_t h, std::size_t w);
/// Dispatches on conv/linear; other layer kinds throw UnsupportedOperatorError.
ReceptiveField get_input(const Layer& layer, std::size_t c, std::size_t h, std::size_t w);

}  // namespace splitinfer
