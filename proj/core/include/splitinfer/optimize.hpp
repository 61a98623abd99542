// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splitinfer/model.hpp"

namespace splitinfer {

/// Folds every batchnorm into the conv before it and absorbs a following relu/relu6 into the
/// conv's activation. Residual sources are remapped onto the fused layer indices.
/// Throws FusionError when a batchnorm does not directly follow a conv.
Model fuse_conv_bn_relu(const Model& model);

struct QuantizedTensor {
    std::vector<std::int8_t> values;
    float scale = 1.0f;
};

/// Symmetric per-tensor scale: max|x| / 127, or 1 for an all-zero tensor.
float symmetric_scale(std::span<const float> values) noexcept;
/// Round half away from zero, clamp to [-127, 127].
std::int8_t quantize_value(double x, double scale) noexcept;
QuantizedTensor quantize_tensor(std::span<const float> values);
std::vector<float> dequantize(const QuantizedTensor& tensor);

/// Converts a fused float32 model to int8: per-tensor symmetric weights, and per-layer activation
/// scales calibrated from a float forward pass over `calibration_input`.
Model quantize(const Model& model, std::span<const float> calibration_input);

}  // namespace splitinfer
