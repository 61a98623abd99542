// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

namespace splitinfer {

/// Dimensions of an activation tensor in channel-major (CHW) order.
struct TensorShape {
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;

    std::size_t neuron_count() const noexcept { return channels * height * width; }
    std::size_t plane() const noexcept { return height * width; }
    std::size_t index(std::size_t c, std::size_t h, std::size_t w) const noexcept {
        return (c * height + h) * width + w;
    }
    std::array<std::size_t, 3> coords(std::size_t index) const noexcept {
        return {index / plane(), (index % plane()) / width, index % width};
    }
    bool operator==(const TensorShape&) const = default;
};

enum class Activation { none, relu, relu6 };
enum class Precision { float32, int8 };

std::string_view to_string(Activation a);
std::string_view to_string(Precision p);
Activation parse_activation(std::string_view s);

/// Bytes one activation or weight occupies at the given precision.
constexpr std::size_t element_bytes(Precision p) noexcept {
    return p == Precision::int8 ? 1 : 4;
}

double apply_activation(Activation a, double x) noexcept;

/// Per-tensor symmetric int8 parameters attached to a split layer after quantization.
struct LayerQuant {
    std::vector<std::int8_t> weights;
    float weight_scale = 1.0f;
    float output_scale = 1.0f;
};

struct ConvLayer {
    TensorShape in_shape;
    TensorShape out_shape;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool depthwise = false;
    /// [out_channel][kernel_in_channels][kernel_h][kernel_w]
    std::vector<float> weights;
    std::vector<float> bias;
    Activation activation = Activation::none;
    LayerQuant quant;

    std::size_t kernel_in_channels() const noexcept { return depthwise ? 1 : in_shape.channels; }
    /// Elements in one output channel's kernel.
    std::size_t kernel_elements() const noexcept { return kernel_in_channels() * kernel_h * kernel_w; }
    std::size_t macs_per_neuron() const noexcept { return kernel_elements(); }
};

/// Weight matrix is in_features x out_features, row-major; column j produces output j.
struct LinearLayer {
    TensorShape in_shape;
    std::size_t out_features = 0;
    std::vector<float> weights;
    std::vector<float> bias;
    Activation activation = Activation::none;
    LayerQuant quant;

    std::size_t in_features() const noexcept { return in_shape.neuron_count(); }
    TensorShape out_shape() const noexcept { return {out_features, 1, 1}; }
    float weight(std::size_t row, std::size_t col) const { return weights[row * out_features + col]; }
};

/// Present only before fusion; the split runtime refuses models that still contain it.
struct BatchNormLayer {
    TensorShape shape;
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> mean;
    std::vector<float> var;
    double eps = 1e-5;
};

/// Standalone activation; absorbed into the preceding conv by fusion.
struct ActivationLayer {
    TensorShape shape;
    Activation activation = Activation::relu;
};

/// Adds the output of layer `from` to the output of the previous layer. Runs on the coordinator.
struct ResidualAddLayer {
    TensorShape shape;
    std::size_t from = 0;
    float output_scale = 1.0f;
};

/// Global average pooling. Runs on the coordinator.
struct GapLayer {
    TensorShape in_shape;
    float output_scale = 1.0f;

    TensorShape out_shape() const noexcept { return {in_shape.channels, 1, 1}; }
};

using Layer =
    std::variant<ConvLayer, LinearLayer, BatchNormLayer, ActivationLayer, ResidualAddLayer, GapLayer>;

TensorShape input_shape(const Layer& layer);
TensorShape output_shape(const Layer& layer);
std::string_view kind_name(const Layer& layer);

/// Conv and linear layers are split across workers; everything else runs on the coordinator.
inline bool is_split_layer(const Layer& layer) noexcept {
    return std::holds_alternative<ConvLayer>(layer) || std::holds_alternative<LinearLayer>(layer);
}

/// Output-channel (conv) or column (linear) count: the unit a weight fragment is made of.
std::size_t weight_unit_count(const Layer& layer);
/// Bytes one kernel/column occupies in a fragment, bias included.
std::size_t weight_unit_bytes(const Layer& layer, Precision precision);
/// Which weight unit output neuron `index` depends on.
std::size_t weight_unit_of(const Layer& layer, std::size_t index);
std::size_t macs_per_neuron(const Layer& layer);

/// A reinterpreted CNN. The layer chain is validated on construction and immutable afterwards.
class Model {
public:
    Model(TensorShape input_shape, std::vector<Layer> layers, Precision precision = Precision::float32,
          float input_scale = 1.0f);

    const TensorShape& input_shape() const noexcept { return input_shape_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const Layer& layer(std::size_t i) const { return layers_.at(i); }
    std::size_t size() const noexcept { return layers_.size(); }
    Precision precision() const noexcept { return precision_; }
    float input_scale() const noexcept { return input_scale_; }

    /// Shape of tensor `t`, where t = -1 is the model input and t = i is the output of layer i.
    TensorShape tensor_shape(long t) const;
    TensorShape output_shape() const;

    /// Weight plus bias bytes of all split layers at the active precision.
    std::size_t weight_bytes() const;
    std::size_t total_macs() const;
    /// True when any batchnorm or standalone activation layer remains.
    bool needs_fusion() const;

private:
    void validate() const;

    TensorShape input_shape_;
    std::vector<Layer> layers_;
    Precision precision_;
    float input_scale_;
};

/// Output shape of a conv given its geometry; throws StructuralError on an empty output.
TensorShape conv_output_shape(std::size_t layer_index, const TensorShape& in, std::size_t out_channels,
                              std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
                              std::size_t padding);

}  // namespace splitinfer
