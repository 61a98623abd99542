// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/model_io.hpp"

#include <sodium.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "splitinfer/error.hpp"

namespace splitinfer {

using nlohmann::json;

namespace {

const json& field(const json& obj, const char* key, std::size_t layer) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ParseError(std::string("missing field '") + key + "'" +
                         (layer != SIZE_MAX ? " in layer " + std::to_string(layer) : std::string()));
    }
    return *it;
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    return it->get<T>();
}

TensorShape parse_shape(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ParseError("shape must be [c, h, w]");
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

json shape_json(const TensorShape& s) {
    return json::array({s.channels, s.height, s.width});
}

// Tensor values either inline or {"dtype": "f32"|"i8", "b64": ...}.
std::vector<float> parse_floats(const json& j) {
    if (j.is_array()) return j.get<std::vector<float>>();
    if (j.is_object() && j.value("dtype", "") == "f32") {
        const auto bytes = decode_base64(field(j, "b64", SIZE_MAX).get<std::string>());
        if (bytes.size() % sizeof(float) != 0) throw ParseError("f32 block length is not a multiple of 4");
        std::vector<float> out(bytes.size() / sizeof(float));
        std::memcpy(out.data(), bytes.data(), bytes.size());
        return out;
    }
    throw ParseError("expected a float tensor");
}

std::vector<std::int8_t> parse_int8(const json& j) {
    if (j.is_array()) {
        std::vector<std::int8_t> out;
        for (const auto& v : j) {
            const int x = v.get<int>();
            if (x < -127 || x > 127) throw ParseError("int8 weight out of range");
            out.push_back(static_cast<std::int8_t>(x));
        }
        return out;
    }
    if (j.is_object() && j.value("dtype", "") == "i8") {
        const auto bytes = decode_base64(field(j, "b64", SIZE_MAX).get<std::string>());
        std::vector<std::int8_t> out(bytes.size());
        std::memcpy(out.data(), bytes.data(), bytes.size());
        return out;
    }
    throw ParseError("expected an int8 tensor");
}

json floats_json(std::span<const float> v, const ModelWriteOptions& opt) {
    if (v.size() <= opt.inline_limit) return json(std::vector<float>(v.begin(), v.end()));
    std::vector<std::uint8_t> bytes(v.size() * sizeof(float));
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return {{"dtype", "f32"}, {"b64", encode_base64(bytes)}};
}

json int8_json(std::span<const std::int8_t> v, const ModelWriteOptions& opt) {
    if (v.size() <= opt.inline_limit) {
        json arr = json::array();
        for (auto x : v) arr.push_back(static_cast<int>(x));
        return arr;
    }
    std::vector<std::uint8_t> bytes(v.size());
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return {{"dtype", "i8"}, {"b64", encode_base64(bytes)}};
}

}  // namespace

json float_tensor_json(std::span<const float> v, const ModelWriteOptions& opt) { return floats_json(v, opt); }
json int8_tensor_json(std::span<const std::int8_t> v, const ModelWriteOptions& opt) { return int8_json(v, opt); }

namespace {

// Weights for a split layer: float arrays for float32 models, codes plus scale for int8.
template <class L>
void parse_weights(const json& j, L& layer, bool int8, std::size_t index) {
    layer.bias = parse_floats(field(j, "bias", index));
    if (int8) {
        layer.quant.weights = parse_int8(field(j, "weights", index));
        layer.quant.weight_scale = field(j, "weight_scale", index).get<float>();
        layer.quant.output_scale = field(j, "output_scale", index).get<float>();
        layer.weights.reserve(layer.quant.weights.size());
        for (auto q : layer.quant.weights) {
            layer.weights.push_back(static_cast<float>(q * static_cast<double>(layer.quant.weight_scale)));
        }
    } else {
        layer.weights = parse_floats(field(j, "weights", index));
    }
}

template <class L>
void write_weights(json& j, const L& layer, bool int8, const ModelWriteOptions& opt) {
    if (int8) {
        j["weights"] = int8_json(layer.quant.weights, opt);
        j["weight_scale"] = layer.quant.weight_scale;
        j["output_scale"] = layer.quant.output_scale;
    } else {
        j["weights"] = floats_json(layer.weights, opt);
    }
    j["bias"] = floats_json(layer.bias, opt);
}

Layer parse_layer(const json& j, const TensorShape& in, std::size_t index, bool int8) {
    const std::string kind = field(j, "kind", index).get<std::string>();
    if (kind == "conv") {
        ConvLayer l;
        l.in_shape = in;
        const auto& kernel = field(j, "kernel", index);
        if (kernel.is_array() && kernel.size() == 2) {
            l.kernel_h = kernel[0].get<std::size_t>();
            l.kernel_w = kernel[1].get<std::size_t>();
        } else {
            l.kernel_h = l.kernel_w = kernel.get<std::size_t>();
        }
        l.stride = get_or<std::size_t>(j, "stride", 1);
        l.padding = get_or<std::size_t>(j, "padding", 0);
        l.depthwise = get_or<bool>(j, "depthwise", false);
        l.activation = parse_activation(get_or<std::string>(j, "activation", "none"));
        const std::size_t out_c = field(j, "out_channels", index).get<std::size_t>();
        l.out_shape = conv_output_shape(index, in, out_c, l.kernel_h, l.kernel_w, l.stride, l.padding);
        if (auto it = j.find("out_shape"); it != j.end()) {
            // A declared shape must agree with the geometry; Model validation reports the mismatch.
            l.out_shape = parse_shape(*it);
        }
        parse_weights(j, l, int8, index);
        return l;
    }
    if (kind == "linear") {
        LinearLayer l;
        l.in_shape = in;
        l.out_features = field(j, "out_features", index).get<std::size_t>();
        if (auto it = j.find("in_features"); it != j.end() && it->get<std::size_t>() != in.neuron_count()) {
            throw StructuralError(index, "declared in_features " + std::to_string(it->get<std::size_t>()) +
                                             " but input has " + std::to_string(in.neuron_count()));
        }
        l.activation = parse_activation(get_or<std::string>(j, "activation", "none"));
        parse_weights(j, l, int8, index);
        return l;
    }
    if (kind == "batchnorm") {
        BatchNormLayer l;
        l.shape = in;
        l.gamma = parse_floats(field(j, "gamma", index));
        l.beta = parse_floats(field(j, "beta", index));
        l.mean = parse_floats(field(j, "mean", index));
        l.var = parse_floats(field(j, "var", index));
        l.eps = get_or<double>(j, "eps", 1e-5);
        return l;
    }
    if (kind == "relu" || kind == "relu6") {
        return ActivationLayer{in, parse_activation(kind)};
    }
    if (kind == "residual_add") {
        ResidualAddLayer l;
        l.shape = in;
        l.from = field(j, "from", index).get<std::size_t>();
        l.output_scale = get_or<float>(j, "output_scale", 1.0f);
        return l;
    }
    if (kind == "gap") {
        GapLayer l;
        l.in_shape = in;
        l.output_scale = get_or<float>(j, "output_scale", 1.0f);
        return l;
    }
    throw UnsupportedOperatorError("layer " + std::to_string(index) + ": unsupported operator '" + kind + "'");
}

}  // namespace

std::string encode_base64(std::span<const std::uint8_t> bytes) {
    if (sodium_init() < 0) throw Error("libsodium failed to initialise");
    const std::size_t len = sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    std::string out(len, '\0');
    sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    out.resize(len - 1);  // drop the terminator
    return out;
}

std::vector<std::uint8_t> decode_base64(const std::string& text) {
    if (sodium_init() < 0) throw Error("libsodium failed to initialise");
    std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr,
                          sodium_base64_VARIANT_ORIGINAL) != 0) {
        throw ParseError("invalid base64 block");
    }
    out.resize(len);
    return out;
}

Model parse_model(const json& doc) {
    try {
        const TensorShape input = parse_shape(field(doc, "input_shape", SIZE_MAX));
        const std::string q = get_or<std::string>(doc, "quantization", "float32");
        if (q != "float32" && q != "int8") throw ParseError("quantization must be float32 or int8");
        const bool int8 = q == "int8";
        const auto& layers_json = field(doc, "layers", SIZE_MAX);
        if (!layers_json.is_array()) throw ParseError("'layers' must be an array");

        std::vector<Layer> layers;
        TensorShape current = input;
        for (std::size_t i = 0; i < layers_json.size(); ++i) {
            layers.push_back(parse_layer(layers_json[i], current, i, int8));
            current = output_shape(layers.back());
        }
        return Model(input, std::move(layers), int8 ? Precision::int8 : Precision::float32,
                     get_or<float>(doc, "input_scale", 1.0f));
    } catch (const json::exception& e) {
        throw ParseError(std::string("model description: ") + e.what());
    }
}

Model read_model(const std::filesystem::path& path) {
    return parse_model(read_json_file(path));
}

json model_to_json(const Model& model, const ModelWriteOptions& opt) {
    const bool int8 = model.precision() == Precision::int8;
    json doc;
    doc["input_shape"] = shape_json(model.input_shape());
    doc["quantization"] = std::string(to_string(model.precision()));
    if (int8) doc["input_scale"] = model.input_scale();
    json layers = json::array();
    for (const Layer& layer : model.layers()) {
        json j;
        if (const auto* c = std::get_if<ConvLayer>(&layer)) {
            j["kind"] = "conv";
            j["kernel"] = json::array({c->kernel_h, c->kernel_w});
            j["stride"] = c->stride;
            j["padding"] = c->padding;
            j["depthwise"] = c->depthwise;
            j["out_channels"] = c->out_shape.channels;
            j["out_shape"] = shape_json(c->out_shape);
            j["activation"] = std::string(to_string(c->activation));
            write_weights(j, *c, int8, opt);
        } else if (const auto* l = std::get_if<LinearLayer>(&layer)) {
            j["kind"] = "linear";
            j["in_features"] = l->in_features();
            j["out_features"] = l->out_features;
            j["activation"] = std::string(to_string(l->activation));
            write_weights(j, *l, int8, opt);
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            j["kind"] = "batchnorm";
            j["gamma"] = floats_json(bn->gamma, opt);
            j["beta"] = floats_json(bn->beta, opt);
            j["mean"] = floats_json(bn->mean, opt);
            j["var"] = floats_json(bn->var, opt);
            j["eps"] = bn->eps;
        } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
            j["kind"] = std::string(to_string(a->activation));
        } else if (const auto* r = std::get_if<ResidualAddLayer>(&layer)) {
            j["kind"] = "residual_add";
            j["from"] = r->from;
            if (int8) j["output_scale"] = r->output_scale;
        } else if (const auto* g = std::get_if<GapLayer>(&layer)) {
            j["kind"] = "gap";
            if (int8) j["output_scale"] = g->output_scale;
        }
        layers.push_back(std::move(j));
    }
    doc["layers"] = std::move(layers);
    return doc;
}

void write_model(const Model& model, const std::filesystem::path& path, const ModelWriteOptions& options) {
    write_json_file(model_to_json(model, options), path);
}

std::vector<float> read_tensor(const std::filesystem::path& path) {
    if (path.extension() == ".json") {
        try {
            return read_json_file(path).get<std::vector<float>>();
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }
    const std::string raw = read_text_file(path);
    if (raw.size() % sizeof(float) != 0) throw ParseError(path.string() + ": raw tensor size not a multiple of 4");
    std::vector<float> out(raw.size() / sizeof(float));
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void write_tensor_json(std::span<const float> values, const std::filesystem::path& path) {
    write_json_file(json(std::vector<float>(values.begin(), values.end())), path);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace splitinfer
