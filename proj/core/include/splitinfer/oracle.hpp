// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splitinfer/model.hpp"

namespace splitinfer::oracle {

/// Every tensor of a dense forward pass: tensors[0] is the input, tensors[i + 1] the output of layer i.
struct DenseActivations {
    std::vector<std::vector<double>> tensors;

    const std::vector<double>& input() const { return tensors.front(); }
    const std::vector<double>& output_of(std::size_t layer) const { return tensors.at(layer + 1); }
};

struct ForwardResult {
    std::vector<double> output;
    DenseActivations activations;
};

/// Textbook float64 forward of one layer. Residual adds need the whole chain; use reference_forward.
std::vector<double> forward_layer(const Layer& layer, std::span<const double> input);

/// Dense single-node inference with float weights and float64 accumulation.
ForwardResult reference_forward(const Model& model, std::span<const float> input);

/// Dense inference of an int8 model: int8 activations and weights, int32 accumulation, float bias.
/// Tensors hold dequantized values.
ForwardResult reference_forward_quantized(const Model& model, std::span<const float> input);

/// Per-element bound on |int8 output - float output|, propagated layer by layer from the
/// actual weight and input rounding errors.
std::vector<double> quantization_error_bound(const Model& quantized, std::span<const float> input);

enum class EquivalenceMode { float32, int8 };

struct Verdict {
    bool pass = false;
    double max_error = 0.0;
    /// max_error divided by the largest oracle magnitude.
    double relative_error = 0.0;
    std::size_t worst_index = 0;
    std::string message;
};

/// Float mode passes when max |split - oracle| <= rtol * max |oracle|.
/// Int8 mode passes when every element is within `bound[i]`.
Verdict check_equivalence(std::span<const float> split, std::span<const double> oracle, EquivalenceMode mode,
                          std::span<const double> bound = {}, double rtol = 1e-5);

/// Input neurons whose perturbation changes output `out_neuron` of layer `layer_index`.
/// Probes a copy of the layer with random weights bounded away from zero, two seeds.
std::vector<std::size_t> brute_force_dependencies(const Model& model, std::size_t layer_index,
                                                  std::size_t out_neuron);

/// The same probe for every output neuron at once: result[o] is the sorted input set of output o.
std::vector<std::vector<std::size_t>> brute_force_dependency_sets(const Layer& layer,
                                                                 std::uint64_t seed = 0x5eed);

}  // namespace splitinfer::oracle
