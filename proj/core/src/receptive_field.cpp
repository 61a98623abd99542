// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/receptive_field.hpp"

#include <algorithm>
#include <string>

#include "splitinfer/error.hpp"

namespace splitinfer {

namespace {

void check_bounds(const TensorShape& out, std::size_t c, std::size_t h, std::size_t w) {
    if (c >= out.channels || h >= out.height || w >= out.width) {
        throw BoundsError("output neuron (" + std::to_string(c) + "," + std::to_string(h) + "," +
                          std::to_string(w) + ") outside " + std::to_string(out.channels) + "x" +
                          std::to_string(out.height) + "x" + std::to_string(out.width));
    }
}

}  // namespace

IndexRange conv_window(std::size_t out_pos, std::size_t stride, std::size_t padding, std::size_t kernel,
                       std::size_t in_extent) noexcept {
    // Window in padded coordinates is [out_pos*stride, out_pos*stride + kernel); shift by padding.
    const std::size_t lo = out_pos * stride;
    const std::size_t hi = lo + kernel;
    const std::size_t begin = lo > padding ? lo - padding : 0;
    const std::size_t end = hi > padding ? std::min(hi - padding, in_extent) : 0;
    return {begin, std::max(begin, end)};
}

ReceptiveField get_input(const ConvLayer& layer, std::size_t c, std::size_t h, std::size_t w) {
    check_bounds(layer.out_shape, c, h, w);
    ReceptiveField rf;
    rf.channels = layer.depthwise ? IndexRange{c, c + 1} : IndexRange{0, layer.in_shape.channels};
    rf.rows = conv_window(h, layer.stride, layer.padding, layer.kernel_h, layer.in_shape.height);
    rf.cols = conv_window(w, layer.stride, layer.padding, layer.kernel_w, layer.in_shape.width);
    return rf;
}

ReceptiveField get_input(const LinearLayer& layer, std::size_t c, std::size_t h, std::size_t w) {
    check_bounds(layer.out_shape(), c, h, w);
    return {{0, layer.in_shape.channels}, {0, layer.in_shape.height}, {0, layer.in_shape.width}};
}

ReceptiveField get_input(const Layer& layer, std::size_t c, std::size_t h, std::size_t w) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return get_input(*conv, c, h, w);
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) return get_input(*lin, c, h, w);
    throw UnsupportedOperatorError("no receptive field for layer kind '" + std::string(kind_name(layer)) + "'");
}

}  // namespace splitinfer
