// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "splitinfer/error.hpp"
#include "splitinfer/oracle.hpp"

namespace splitinfer {

Model fuse_conv_bn_relu(const Model& model) {
    std::vector<Layer> fused;
    // old layer index -> index of the fused layer producing the same tensor
    std::vector<std::size_t> remap(model.size());

    for (std::size_t i = 0; i < model.size(); ++i) {
        const Layer& layer = model.layer(i);
        if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            ConvLayer* conv = (i > 0 && !fused.empty() && remap[i - 1] == fused.size() - 1)
                                  ? std::get_if<ConvLayer>(&fused.back())
                                  : nullptr;
            if (conv == nullptr) throw FusionError("batchnorm at layer " + std::to_string(i) + " does not follow a conv");
            if (conv->activation != Activation::none) {
                throw FusionError("batchnorm at layer " + std::to_string(i) + " follows an activation");
            }
            const std::size_t per_kernel = conv->kernel_elements();
            for (std::size_t c = 0; c < conv->out_shape.channels; ++c) {
                const double k = bn->gamma[c] / std::sqrt(static_cast<double>(bn->var[c]) + bn->eps);
                for (std::size_t e = 0; e < per_kernel; ++e) {
                    float& w = conv->weights[c * per_kernel + e];
                    w = static_cast<float>(w * k);
                }
                conv->bias[c] = static_cast<float>((conv->bias[c] - bn->mean[c]) * k + bn->beta[c]);
            }
            remap[i] = fused.size() - 1;
            continue;
        }
        if (const auto* act = std::get_if<ActivationLayer>(&layer)) {
            Layer* prev = (i > 0 && !fused.empty() && remap[i - 1] == fused.size() - 1) ? &fused.back() : nullptr;
            Activation* slot = nullptr;
            if (prev != nullptr) {
                if (auto* c = std::get_if<ConvLayer>(prev)) slot = &c->activation;
                if (auto* l = std::get_if<LinearLayer>(prev)) slot = &l->activation;
            }
            if (slot == nullptr || *slot != Activation::none) {
                throw FusionError("activation at layer " + std::to_string(i) + " cannot be absorbed");
            }
            *slot = act->activation;
            remap[i] = fused.size() - 1;
            continue;
        }
        Layer copy = layer;
        if (auto* add = std::get_if<ResidualAddLayer>(&copy)) add->from = remap[add->from];
        fused.push_back(std::move(copy));
        remap[i] = fused.size() - 1;
    }
    return Model(model.input_shape(), std::move(fused), model.precision(), model.input_scale());
}

float symmetric_scale(std::span<const float> values) noexcept {
    float max_abs = 0.0f;
    for (float v : values) max_abs = std::max(max_abs, std::abs(v));
    return max_abs > 0.0f ? max_abs / 127.0f : 1.0f;
}

std::int8_t quantize_value(double x, double scale) noexcept {
    return static_cast<std::int8_t>(std::clamp(std::round(x / scale), -127.0, 127.0));
}

QuantizedTensor quantize_tensor(std::span<const float> values) {
    QuantizedTensor q;
    q.scale = symmetric_scale(values);
    q.values.reserve(values.size());
    for (float v : values) q.values.push_back(quantize_value(v, q.scale));
    return q;
}

std::vector<float> dequantize(const QuantizedTensor& tensor) {
    std::vector<float> out;
    out.reserve(tensor.values.size());
    for (auto q : tensor.values) out.push_back(static_cast<float>(q * static_cast<double>(tensor.scale)));
    return out;
}

Model quantize(const Model& model, std::span<const float> calibration_input) {
    if (model.precision() != Precision::float32) throw DomainError("quantize expects a float32 model");
    if (model.needs_fusion()) throw FusionError("fuse batchnorm and activation layers before quantizing");

    const auto dense = oracle::reference_forward(model, calibration_input);
    auto scale_of = [](const std::vector<double>& t) {
        double m = 0.0;
        for (double v : t) m = std::max(m, std::abs(v));
        return m > 0.0 ? static_cast<float>(m / 127.0) : 1.0f;
    };

    std::vector<Layer> layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const float out_scale = scale_of(dense.activations.output_of(i));
        std::visit(
            [&](auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, ConvLayer> || std::is_same_v<T, LinearLayer>) {
                    QuantizedTensor q = quantize_tensor(l.weights);
                    l.quant.weights = std::move(q.values);
                    l.quant.weight_scale = q.scale;
                    l.quant.output_scale = out_scale;
                } else if constexpr (std::is_same_v<T, ResidualAddLayer> || std::is_same_v<T, GapLayer>) {
                    l.output_scale = out_scale;
                }
            },
            layers[i]);
    }
    return Model(model.input_shape(), std::move(layers), Precision::int8, scale_of(dense.activations.input()));
}

}  // namespace splitinfer
