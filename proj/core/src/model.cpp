// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/model.hpp"

#include <algorithm>
#include <string>

#include "splitinfer/error.hpp"

namespace splitinfer {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string shape_str(const TensorShape& s) {
    return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

void check_shape(std::size_t layer, const TensorShape& s) {
    if (s.channels == 0 || s.height == 0 || s.width == 0) {
        throw StructuralError(layer, "zero-sized dimension in " + shape_str(s));
    }
}

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::relu6: return "relu6";
    }
    return "none";
}

std::string_view to_string(Precision p) {
    return p == Precision::int8 ? "int8" : "float32";
}

Activation parse_activation(std::string_view s) {
    if (s == "none" || s.empty()) return Activation::none;
    if (s == "relu") return Activation::relu;
    if (s == "relu6") return Activation::relu6;
    throw UnsupportedOperatorError("unsupported activation '" + std::string(s) + "'");
}

double apply_activation(Activation a, double x) noexcept {
    switch (a) {
        case Activation::none: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::relu6: return std::clamp(x, 0.0, 6.0);
    }
    return x;
}

TensorShape input_shape(const Layer& layer) {
    return std::visit(Overloaded{
                          [](const ConvLayer& l) { return l.in_shape; },
                          [](const LinearLayer& l) { return l.in_shape; },
                          [](const BatchNormLayer& l) { return l.shape; },
                          [](const ActivationLayer& l) { return l.shape; },
                          [](const ResidualAddLayer& l) { return l.shape; },
                          [](const GapLayer& l) { return l.in_shape; },
                      },
                      layer);
}

TensorShape output_shape(const Layer& layer) {
    return std::visit(Overloaded{
                          [](const ConvLayer& l) { return l.out_shape; },
                          [](const LinearLayer& l) { return l.out_shape(); },
                          [](const BatchNormLayer& l) { return l.shape; },
                          [](const ActivationLayer& l) { return l.shape; },
                          [](const ResidualAddLayer& l) { return l.shape; },
                          [](const GapLayer& l) { return l.out_shape(); },
                      },
                      layer);
}

std::string_view kind_name(const Layer& layer) {
    return std::visit(Overloaded{
                          [](const ConvLayer&) { return std::string_view("conv"); },
                          [](const LinearLayer&) { return std::string_view("linear"); },
                          [](const BatchNormLayer&) { return std::string_view("batchnorm"); },
                          [](const ActivationLayer& l) { return to_string(l.activation); },
                          [](const ResidualAddLayer&) { return std::string_view("residual_add"); },
                          [](const GapLayer&) { return std::string_view("gap"); },
                      },
                      layer);
}

std::size_t weight_unit_count(const Layer& layer) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return conv->out_shape.channels;
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) return lin->out_features;
    return 0;
}

std::size_t weight_unit_bytes(const Layer& layer, Precision precision) {
    const std::size_t eb = element_bytes(precision);
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return conv->kernel_elements() * eb + sizeof(float);
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) return lin->in_features() * eb + sizeof(float);
    return 0;
}

std::size_t weight_unit_of(const Layer& layer, std::size_t index) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return index / conv->out_shape.plane();
    return index;
}

std::size_t macs_per_neuron(const Layer& layer) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return conv->macs_per_neuron();
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) return lin->in_features();
    return 0;
}

TensorShape conv_output_shape(std::size_t layer_index, const TensorShape& in, std::size_t out_channels,
                              std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
                              std::size_t padding) {
    if (stride == 0 || kernel_h == 0 || kernel_w == 0) {
        throw StructuralError(layer_index, "kernel and stride must be positive");
    }
    const std::size_t padded_h = in.height + 2 * padding;
    const std::size_t padded_w = in.width + 2 * padding;
    if (padded_h < kernel_h || padded_w < kernel_w) {
        throw StructuralError(layer_index, "kernel larger than padded input " + shape_str(in));
    }
    return {out_channels, (padded_h - kernel_h) / stride + 1, (padded_w - kernel_w) / stride + 1};
}

Model::Model(TensorShape input_shape, std::vector<Layer> layers, Precision precision, float input_scale)
    : input_shape_(input_shape), layers_(std::move(layers)), precision_(precision), input_scale_(input_scale) {
    validate();
}

TensorShape Model::tensor_shape(long t) const {
    if (t < 0) return input_shape_;
    return splitinfer::output_shape(layers_.at(static_cast<std::size_t>(t)));
}

TensorShape Model::output_shape() const {
    return tensor_shape(static_cast<long>(layers_.size()) - 1);
}

std::size_t Model::weight_bytes() const {
    std::size_t total = 0;
    for (const auto& layer : layers_) total += weight_unit_count(layer) * weight_unit_bytes(layer, precision_);
    return total;
}

std::size_t Model::total_macs() const {
    std::size_t total = 0;
    for (const auto& layer : layers_) {
        if (is_split_layer(layer)) total += splitinfer::output_shape(layer).neuron_count() * macs_per_neuron(layer);
    }
    return total;
}

bool Model::needs_fusion() const {
    return std::any_of(layers_.begin(), layers_.end(), [](const Layer& l) {
        return std::holds_alternative<BatchNormLayer>(l) || std::holds_alternative<ActivationLayer>(l);
    });
}

void Model::validate() const {
    if (layers_.empty()) throw StructuralError(0, "model has no layers");
    check_shape(0, input_shape_);
    const bool int8 = precision_ == Precision::int8;

    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const TensorShape expected = tensor_shape(static_cast<long>(i) - 1);
        const Layer& layer = layers_[i];
        const TensorShape in = splitinfer::input_shape(layer);
        if (!(in == expected)) {
            throw StructuralError(i, "input shape " + shape_str(in) + " does not match previous output " +
                                         shape_str(expected));
        }
        check_shape(i, splitinfer::output_shape(layer));

        std::visit(
            Overloaded{
                [&](const ConvLayer& l) {
                    const TensorShape formula = conv_output_shape(i, l.in_shape, l.out_shape.channels, l.kernel_h,
                                                                  l.kernel_w, l.stride, l.padding);
                    if (!(formula == l.out_shape)) {
                        throw StructuralError(i, "declared output " + shape_str(l.out_shape) +
                                                     " but kernel geometry yields " + shape_str(formula));
                    }
                    if (l.depthwise && l.out_shape.channels != l.in_shape.channels) {
                        throw StructuralError(i, "depthwise conv must keep the channel count");
                    }
                    if (l.weights.size() != l.out_shape.channels * l.kernel_elements()) {
                        throw StructuralError(i, "conv weight count " + std::to_string(l.weights.size()) +
                                                     " != " +
                                                     std::to_string(l.out_shape.channels * l.kernel_elements()));
                    }
                    if (l.bias.size() != l.out_shape.channels) throw StructuralError(i, "conv bias length mismatch");
                    if (int8 && l.quant.weights.size() != l.weights.size()) {
                        throw StructuralError(i, "int8 model lacks quantized conv weights");
                    }
                },
                [&](const LinearLayer& l) {
                    if (l.out_features == 0) throw StructuralError(i, "linear layer with no outputs");
                    if (l.weights.size() != l.in_features() * l.out_features) {
                        throw StructuralError(i, "linear weight matrix is not " + std::to_string(l.in_features()) +
                                                     "x" + std::to_string(l.out_features));
                    }
                    if (l.bias.size() != l.out_features) throw StructuralError(i, "linear bias length mismatch");
                    if (int8 && l.quant.weights.size() != l.weights.size()) {
                        throw StructuralError(i, "int8 model lacks quantized linear weights");
                    }
                },
                [&](const BatchNormLayer& l) {
                    const std::size_t c = l.shape.channels;
                    if (l.gamma.size() != c || l.beta.size() != c || l.mean.size() != c || l.var.size() != c) {
                        throw StructuralError(i, "batchnorm parameter length mismatch");
                    }
                },
                [&](const ActivationLayer&) {},
                [&](const ResidualAddLayer& l) {
                    if (l.from >= i) throw StructuralError(i, "residual source must be an earlier layer");
                    if (!(tensor_shape(static_cast<long>(l.from)) == l.shape)) {
                        throw StructuralError(i, "residual source layer " + std::to_string(l.from) +
                                                     " has a different shape");
                    }
                },
                [&](const GapLayer&) {},
            },
            layer);
    }
}

}  // namespace splitinfer
