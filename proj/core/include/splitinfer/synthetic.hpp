// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "splitinfer/model.hpp"

namespace splitinfer {

// Seeded model synthesis for desk-scale experiments. Weights are uniform in [-1, 1].

/// 3x16x16 input: conv+batchnorm+relu, depthwise, pointwise, residual, gap, linear(10).
Model make_tiny_cnn(std::uint64_t seed);

/// MobileNetV2 layer schedule (width 1.0): 53 convs, global pooling and a 1280x1000 classifier.
/// Every bottleneck, including the t=1 one, keeps its 1x1 expansion conv.
Model make_mobilenet_v2_like(std::uint64_t seed, TensorShape input = {3, 112, 112});

/// Comma-separated layer list, e.g. "conv:16:3:1:1:relu6,dwconv:3:2:1,gap,linear:10".
///   conv:<out>:<k>:<stride>:<pad>[:<act>]   dwconv:<k>:<stride>:<pad>[:<act>]
///   linear:<out>[:<act>]   gap   residual:<from>
Model make_custom(const std::string& layers, TensorShape input, std::uint64_t seed);

struct RandomCnnLimits {
    std::size_t max_layers = 6;
    std::size_t max_channels = 16;
    std::size_t max_spatial = 16;
    bool allow_linear = true;
    bool allow_residual = true;
};

/// A random shape-consistent CNN within `limits`.
Model make_random_cnn(std::mt19937_64& rng, const RandomCnnLimits& limits = {});

std::vector<float> random_input(const TensorShape& shape, std::uint64_t seed);

}  // namespace splitinfer
