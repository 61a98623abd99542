// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "splitinfer/error.hpp"

namespace splitinfer::oracle {

namespace {

// Plain loops over the convolution definition; deliberately shares nothing with the runtime.
std::vector<double> conv_forward(const ConvLayer& l, std::span<const double> in,
                                 std::span<const float> weights, bool apply_act = true) {
    const auto& is = l.in_shape;
    const auto& os = l.out_shape;
    std::vector<double> out(os.neuron_count());
    for (std::size_t oc = 0; oc < os.channels; ++oc) {
        for (std::size_t oh = 0; oh < os.height; ++oh) {
            for (std::size_t ow = 0; ow < os.width; ++ow) {
                double acc = l.bias[oc];
                for (std::size_t k = 0; k < l.kernel_in_channels(); ++k) {
                    const std::size_t ic = l.depthwise ? oc : k;
                    for (std::size_t kh = 0; kh < l.kernel_h; ++kh) {
                        const long ih = static_cast<long>(oh * l.stride + kh) - static_cast<long>(l.padding);
                        if (ih < 0 || ih >= static_cast<long>(is.height)) continue;
                        for (std::size_t kw = 0; kw < l.kernel_w; ++kw) {
                            const long iw = static_cast<long>(ow * l.stride + kw) - static_cast<long>(l.padding);
                            if (iw < 0 || iw >= static_cast<long>(is.width)) continue;
                            const double x = in[(ic * is.height + ih) * is.width + iw];
                            const double w = weights[((oc * l.kernel_in_channels() + k) * l.kernel_h + kh) *
                                                         l.kernel_w +
                                                     kw];
                            acc += w * x;
                        }
                    }
                }
                out[(oc * os.height + oh) * os.width + ow] = apply_act ? apply_activation(l.activation, acc) : acc;
            }
        }
    }
    return out;
}

std::vector<double> linear_forward(const LinearLayer& l, std::span<const double> in,
                                   std::span<const float> weights, bool apply_act = true) {
    std::vector<double> out(l.out_features);
    for (std::size_t j = 0; j < l.out_features; ++j) {
        double acc = l.bias[j];
        for (std::size_t i = 0; i < l.in_features(); ++i) acc += static_cast<double>(weights[i * l.out_features + j]) * in[i];
        out[j] = apply_act ? apply_activation(l.activation, acc) : acc;
    }
    return out;
}

std::vector<double> gap_forward(const GapLayer& l, std::span<const double> in) {
    std::vector<double> out(l.in_shape.channels, 0.0);
    const std::size_t plane = l.in_shape.plane();
    for (std::size_t c = 0; c < l.in_shape.channels; ++c) {
        double sum = 0.0;
        for (std::size_t p = 0; p < plane; ++p) sum += in[c * plane + p];
        out[c] = sum / static_cast<double>(plane);
    }
    return out;
}

void check_input(const Model& model, std::size_t n) {
    if (n != model.input_shape().neuron_count()) {
        throw BoundsError("input has " + std::to_string(n) + " elements, model expects " +
                          std::to_string(model.input_shape().neuron_count()));
    }
}

double quant_round(double x, double scale) {
    return std::clamp(std::round(x / scale), -127.0, 127.0);
}

double tensor_scale(const Model& model, long t) {
    if (t < 0) return model.input_scale();
    const Layer& l = model.layer(static_cast<std::size_t>(t));
    if (const auto* c = std::get_if<ConvLayer>(&l)) return c->quant.output_scale;
    if (const auto* lin = std::get_if<LinearLayer>(&l)) return lin->quant.output_scale;
    if (const auto* r = std::get_if<ResidualAddLayer>(&l)) return r->output_scale;
    if (const auto* g = std::get_if<GapLayer>(&l)) return g->output_scale;
    throw UnsupportedOperatorError("int8 models must be fused");
}

// Requantize `y` to `scale`, returning dequantized values.
std::vector<double> requantize(std::vector<double> y, double scale) {
    for (auto& v : y) v = quant_round(v, scale) * scale;
    return y;
}

}  // namespace

std::vector<double> forward_layer(const Layer& layer, std::span<const double> input) {
    if (input.size() != input_shape(layer).neuron_count()) throw BoundsError("layer input size mismatch");
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) return conv_forward(*conv, input, conv->weights);
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) return linear_forward(*lin, input, lin->weights);
    if (const auto* gap = std::get_if<GapLayer>(&layer)) return gap_forward(*gap, input);
    if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
        std::vector<double> out(input.begin(), input.end());
        const std::size_t plane = bn->shape.plane();
        for (std::size_t c = 0; c < bn->shape.channels; ++c) {
            const double inv = 1.0 / std::sqrt(static_cast<double>(bn->var[c]) + bn->eps);
            for (std::size_t p = 0; p < plane; ++p) {
                double& v = out[c * plane + p];
                v = (v - bn->mean[c]) * inv * bn->gamma[c] + bn->beta[c];
            }
        }
        return out;
    }
    if (const auto* act = std::get_if<ActivationLayer>(&layer)) {
        std::vector<double> out(input.begin(), input.end());
        for (auto& v : out) v = apply_activation(act->activation, v);
        return out;
    }
    throw UnsupportedOperatorError("residual_add needs the full chain");
}

ForwardResult reference_forward(const Model& model, std::span<const float> input) {
    check_input(model, input.size());
    ForwardResult r;
    auto& t = r.activations.tensors;
    t.emplace_back(input.begin(), input.end());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const Layer& layer = model.layer(i);
        if (const auto* add = std::get_if<ResidualAddLayer>(&layer)) {
            std::vector<double> out = t.back();
            const auto& skip = t[add->from + 1];
            for (std::size_t k = 0; k < out.size(); ++k) out[k] += skip[k];
            t.push_back(std::move(out));
        } else {
            t.push_back(forward_layer(layer, t.back()));
        }
    }
    r.output = t.back();
    return r;
}

ForwardResult reference_forward_quantized(const Model& model, std::span<const float> input) {
    if (model.precision() != Precision::int8) throw DomainError("reference_forward_quantized needs an int8 model");
    check_input(model, input.size());
    ForwardResult r;
    auto& t = r.activations.tensors;
    {
        std::vector<double> x(input.begin(), input.end());
        t.push_back(requantize(std::move(x), model.input_scale()));
    }
    for (std::size_t i = 0; i < model.size(); ++i) {
        const Layer& layer = model.layer(i);
        const double in_scale = tensor_scale(model, static_cast<long>(i) - 1);
        const double out_scale = tensor_scale(model, static_cast<long>(i));
        const auto& x = t.back();
        std::vector<double> y;
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            // Integer codes in, integer accumulate, rescale once.
            std::vector<double> codes(x.size());
            for (std::size_t k = 0; k < x.size(); ++k) codes[k] = std::round(x[k] / in_scale);
            std::vector<float> wq(conv->quant.weights.begin(), conv->quant.weights.end());
            ConvLayer zero_bias = *conv;
            std::fill(zero_bias.bias.begin(), zero_bias.bias.end(), 0.0f);
            y = conv_forward(zero_bias, codes, wq, false);
            const std::size_t plane = conv->out_shape.plane();
            for (std::size_t k = 0; k < y.size(); ++k) {
                const double v = y[k] * conv->quant.weight_scale * in_scale + conv->bias[k / plane];
                y[k] = apply_activation(conv->activation, v);
            }
        } else if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
            std::vector<double> codes(x.size());
            for (std::size_t k = 0; k < x.size(); ++k) codes[k] = std::round(x[k] / in_scale);
            std::vector<float> wq(lin->quant.weights.begin(), lin->quant.weights.end());
            LinearLayer zero_bias = *lin;
            std::fill(zero_bias.bias.begin(), zero_bias.bias.end(), 0.0f);
            y = linear_forward(zero_bias, codes, wq, false);
            for (std::size_t k = 0; k < y.size(); ++k) {
                y[k] = apply_activation(lin->activation, y[k] * lin->quant.weight_scale * in_scale + lin->bias[k]);
            }
        } else if (const auto* add = std::get_if<ResidualAddLayer>(&layer)) {
            y = x;
            const auto& skip = t[add->from + 1];
            for (std::size_t k = 0; k < y.size(); ++k) y[k] += skip[k];
        } else if (const auto* gap = std::get_if<GapLayer>(&layer)) {
            y = gap_forward(*gap, x);
        } else {
            throw UnsupportedOperatorError("int8 models must be fused");
        }
        t.push_back(requantize(std::move(y), out_scale));
    }
    r.output = t.back();
    return r;
}

std::vector<double> quantization_error_bound(const Model& q, std::span<const float> input) {
    if (q.precision() != Precision::int8) throw DomainError("quantization_error_bound needs an int8 model");
    const ForwardResult exact = reference_forward(q, input);
    const auto& acts = exact.activations.tensors;

    // Bound for rounding `value` (already carrying `err`) to `scale`, clipping included.
    auto requant_err = [](double value, double err, double scale) {
        return std::max(scale / 2.0, std::abs(value) + err - 127.0 * scale);
    };

    std::vector<double> tensor_err(q.size() + 1, 0.0);
    std::vector<double> out_bound;
    {
        double e = 0.0;
        for (float x : input) e = std::max(e, std::abs(x - quant_round(x, q.input_scale()) * q.input_scale()));
        tensor_err[0] = e;
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
        const Layer& layer = q.layer(i);
        const double e_in = tensor_err[i];
        const auto& x = acts[i];
        const auto& y = acts[i + 1];
        const double s_out = tensor_scale(q, static_cast<long>(i));
        std::vector<double> b(y.size());
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            // |sum w~ x~ - sum w x| <= e_in * sum|w~| + sum |w~ - w| |x|
            std::vector<double> abs_x(x.size());
            for (std::size_t k = 0; k < x.size(); ++k) abs_x[k] = std::abs(x[k]);
            std::vector<float> abs_wq(conv->weights.size()), w_err(conv->weights.size());
            for (std::size_t k = 0; k < w_err.size(); ++k) {
                const double wq = conv->quant.weights[k] * static_cast<double>(conv->quant.weight_scale);
                abs_wq[k] = static_cast<float>(std::abs(wq));
                w_err[k] = static_cast<float>(std::abs(wq - conv->weights[k]));
            }
            ConvLayer probe = *conv;
            std::fill(probe.bias.begin(), probe.bias.end(), 0.0f);
            const std::vector<double> ones(x.size(), 1.0);
            const auto sum_abs_w = conv_forward(probe, ones, abs_wq, false);
            const auto werr_x = conv_forward(probe, abs_x, w_err, false);
            for (std::size_t k = 0; k < b.size(); ++k) {
                const double pre = e_in * sum_abs_w[k] * (1 + 1e-6) + werr_x[k] * (1 + 1e-6);
                b[k] = pre + requant_err(y[k], pre, s_out);
            }
        } else if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
            for (std::size_t j = 0; j < lin->out_features; ++j) {
                double sw = 0.0, wx = 0.0;
                for (std::size_t r = 0; r < lin->in_features(); ++r) {
                    const double wq = lin->quant.weights[r * lin->out_features + j] *
                                      static_cast<double>(lin->quant.weight_scale);
                    sw += std::abs(wq);
                    wx += std::abs(wq - lin->weights[r * lin->out_features + j]) * std::abs(x[r]);
                }
                const double pre = (e_in * sw + wx) * (1 + 1e-6);
                b[j] = pre + requant_err(y[j], pre, s_out);
            }
        } else if (const auto* add = std::get_if<ResidualAddLayer>(&layer)) {
            const double e = e_in + tensor_err[add->from + 1];
            for (std::size_t k = 0; k < b.size(); ++k) b[k] = e + requant_err(y[k], e, s_out);
        } else {
            for (std::size_t k = 0; k < b.size(); ++k) b[k] = e_in + requant_err(y[k], e_in, s_out);
        }
        tensor_err[i + 1] = b.empty() ? 0.0 : *std::max_element(b.begin(), b.end());
        out_bound = std::move(b);
    }
    return out_bound;
}

Verdict check_equivalence(std::span<const float> split, std::span<const double> oracle, EquivalenceMode mode,
                          std::span<const double> bound, double rtol) {
    Verdict v;
    if (split.size() != oracle.size()) {
        v.message = "shape mismatch: split has " + std::to_string(split.size()) + " elements, oracle " +
                    std::to_string(oracle.size());
        return v;
    }
    if (mode == EquivalenceMode::int8 && bound.size() != oracle.size()) {
        v.message = "int8 mode needs one bound per element";
        return v;
    }
    double scale = 0.0;
    for (double o : oracle) scale = std::max(scale, std::abs(o));
    bool ok = true;
    std::size_t first_violation = oracle.size();
    for (std::size_t i = 0; i < oracle.size(); ++i) {
        const double err = std::abs(static_cast<double>(split[i]) - oracle[i]);
        if (!(err <= v.max_error)) {
            v.max_error = err;
            v.worst_index = i;
        }
        if (mode == EquivalenceMode::int8 && !(err <= bound[i]) && first_violation == oracle.size()) {
            first_violation = i;
            ok = false;
        }
    }
    v.relative_error = scale > 0.0 ? v.max_error / scale : v.max_error;
    if (mode == EquivalenceMode::float32) {
        ok = v.relative_error <= rtol;
        if (!ok) first_violation = v.worst_index;
    }
    v.pass = ok;
    v.message = ok ? "pass"
                   : "mismatch at index " + std::to_string(first_violation) + ": split " +
                         std::to_string(split[first_violation]) + " vs oracle " +
                         std::to_string(oracle[first_violation]);
    return v;
}

std::vector<std::vector<std::size_t>> brute_force_dependency_sets(const Layer& layer, std::uint64_t seed) {
    if (!is_split_layer(layer)) throw UnsupportedOperatorError("dependency probing needs a conv or linear layer");
    const std::size_t n_in = input_shape(layer).neuron_count();
    const std::size_t n_out = output_shape(layer).neuron_count();
    std::vector<std::vector<char>> hit(n_out, std::vector<char>(n_in, 0));

    for (int round = 0; round < 2; ++round) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(round) * 0x9e3779b97f4a7c15ULL);
        std::uniform_real_distribution<double> mag(0.5, 1.5);
        std::bernoulli_distribution sign(0.5);
        auto away_from_zero = [&] { return static_cast<float>(sign(rng) ? mag(rng) : -mag(rng)); };

        Layer probe = layer;
        std::visit(
            [&](auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, ConvLayer> || std::is_same_v<T, LinearLayer>) {
                    for (auto& w : l.weights) w = away_from_zero();
                    l.activation = Activation::none;
                }
            },
            probe);

        std::vector<double> x(n_in);
        for (auto& v : x) v = away_from_zero();
        const std::vector<double> base = forward_layer(probe, x);
        for (std::size_t p = 0; p < n_in; ++p) {
            const double saved = x[p];
            x[p] += 1.0;
            const std::vector<double> moved = forward_layer(probe, x);
            x[p] = saved;
            for (std::size_t o = 0; o < n_out; ++o) {
                if (moved[o] != base[o]) hit[o][p] = 1;
            }
        }
    }

    std::vector<std::vector<std::size_t>> result(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
        for (std::size_t p = 0; p < n_in; ++p) {
            if (hit[o][p]) result[o].push_back(p);
        }
    }
    return result;
}

std::vector<std::size_t> brute_force_dependencies(const Model& model, std::size_t layer_index,
                                                  std::size_t out_neuron) {
    const Layer& layer = model.layer(layer_index);
    const std::size_t n_out = output_shape(layer).neuron_count();
    if (out_neuron >= n_out) throw BoundsError("output neuron out of range");
    return brute_force_dependency_sets(layer).at(out_neuron);
}

}  // namespace splitinfer::oracle
