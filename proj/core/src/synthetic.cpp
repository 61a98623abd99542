// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#include "splitinfer/synthetic.hpp"

#include <sstream>

#include "splitinfer/error.hpp"

namespace splitinfer {

namespace {

class Builder {
public:
    Builder(TensorShape input, std::uint64_t seed) : input_(input), current_(input), rng_(seed) {}

    std::vector<float> uniform(std::size_t n) {
        std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
        std::vector<float> v(n);
        for (auto& x : v) x = dist(rng_);
        return v;
    }

    Builder& conv(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad, Activation act,
                  bool depthwise = false) {
        ConvLayer l;
        l.in_shape = current_;
        l.kernel_h = l.kernel_w = k;
        l.stride = stride;
        l.padding = pad;
        l.depthwise = depthwise;
        l.activation = act;
        l.out_shape = conv_output_shape(layers_.size(), current_, depthwise ? current_.channels : out, k, k,
                                        stride, pad);
        l.weights = uniform(l.out_shape.channels * l.kernel_elements());
        l.bias = uniform(l.out_shape.channels);
        push(std::move(l));
        return *this;
    }

    Builder& linear(std::size_t out, Activation act = Activation::none) {
        LinearLayer l;
        l.in_shape = current_;
        l.out_features = out;
        l.activation = act;
        l.weights = uniform(current_.neuron_count() * out);
        l.bias = uniform(out);
        push(std::move(l));
        return *this;
    }

    Builder& batchnorm() {
        BatchNormLayer l;
        l.shape = current_;
        const std::size_t c = current_.channels;
        std::uniform_real_distribution<float> pos(0.5f, 1.5f);
        l.gamma.resize(c);
        l.var.resize(c);
        for (std::size_t i = 0; i < c; ++i) {
            l.gamma[i] = pos(rng_);
            l.var[i] = pos(rng_);
        }
        l.beta = uniform(c);
        l.mean = uniform(c);
        push(std::move(l));
        return *this;
    }

    Builder& activation(Activation a) {
        push(ActivationLayer{current_, a});
        return *this;
    }

    Builder& residual(std::size_t from) {
        push(ResidualAddLayer{current_, from, 1.0f});
        return *this;
    }

    Builder& gap() {
        push(GapLayer{current_, 1.0f});
        return *this;
    }

    std::size_t last_index() const { return layers_.size() - 1; }
    const TensorShape& current() const { return current_; }
    std::mt19937_64& rng() { return rng_; }
    std::size_t size() const { return layers_.size(); }
    TensorShape shape_of(std::size_t i) const { return output_shape(layers_[i]); }

    Model build() { return Model(input_, std::move(layers_)); }

private:
    void push(Layer l) {
        current_ = output_shape(l);
        layers_.push_back(std::move(l));
    }

    TensorShape input_;
    TensorShape current_;
    std::vector<Layer> layers_;
    std::mt19937_64 rng_;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

}  // namespace

Model make_tiny_cnn(std::uint64_t seed) {
    Builder b({3, 16, 16}, seed);
    b.conv(8, 3, 1, 1, Activation::none).batchnorm().activation(Activation::relu);
    const std::size_t skip = b.last_index();
    b.conv(8, 3, 1, 1, Activation::relu6, true);
    b.conv(8, 1, 1, 0, Activation::none);
    b.residual(skip);
    b.conv(16, 3, 2, 1, Activation::relu6);
    b.gap();
    b.linear(10);
    return b.build();
}

Model make_mobilenet_v2_like(std::uint64_t seed, TensorShape input) {
    struct Stage {
        std::size_t expand, channels, repeats, stride;
    };
    constexpr Stage stages[] = {{1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2}, {6, 64, 4, 2},
                                {6, 96, 3, 1},  {6, 160, 3, 2}, {6, 320, 1, 1}};
    Builder b(input, seed);
    b.conv(32, 3, 2, 1, Activation::relu6);
    for (const auto& st : stages) {
        for (std::size_t r = 0; r < st.repeats; ++r) {
            const std::size_t stride = r == 0 ? st.stride : 1;
            const std::size_t in_c = b.current().channels;
            const std::size_t block_input = b.last_index();
            b.conv(in_c * st.expand, 1, 1, 0, Activation::relu6);
            b.conv(0, 3, stride, 1, Activation::relu6, true);
            b.conv(st.channels, 1, 1, 0, Activation::none);
            if (stride == 1 && in_c == st.channels) b.residual(block_input);
        }
    }
    b.conv(1280, 1, 1, 0, Activation::relu6);
    b.gap();
    b.linear(1000);
    return b.build();
}

Model make_custom(const std::string& layers, TensorShape input, std::uint64_t seed) {
    Builder b(input, seed);
    for (const std::string& item : split(layers, ',')) {
        const auto parts = split(item, ':');
        if (parts.empty()) continue;
        auto num = [&](std::size_t i) -> std::size_t {
            if (i >= parts.size()) throw ParseError("layer spec '" + item + "' is missing a field");
            return std::stoul(parts[i]);
        };
        auto act = [&](std::size_t i) { return i < parts.size() ? parse_activation(parts[i]) : Activation::none; };
        const std::string& kind = parts[0];
        if (kind == "conv") {
            b.conv(num(1), num(2), num(3), num(4), act(5));
        } else if (kind == "dwconv") {
            b.conv(0, num(1), num(2), num(3), act(4), true);
        } else if (kind == "linear") {
            b.linear(num(1), act(2));
        } else if (kind == "gap") {
            b.gap();
        } else if (kind == "residual") {
            b.residual(num(1));
        } else {
            throw UnsupportedOperatorError("unknown layer kind '" + kind + "' in custom spec");
        }
    }
    return b.build();
}

Model make_random_cnn(std::mt19937_64& rng, const RandomCnnLimits& limits) {
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    const TensorShape input{pick(1, std::min<std::size_t>(4, limits.max_channels)),
                            pick(4, limits.max_spatial), pick(4, limits.max_spatial)};
    Builder b(input, rng());
    const std::size_t n_layers = pick(1, limits.max_layers);
    const Activation acts[] = {Activation::none, Activation::relu, Activation::relu6};
    bool flat = false;

    while (b.size() < n_layers) {
        const TensorShape cur = b.current();
        const std::size_t choice = pick(0, 9);
        if (flat || (limits.allow_linear && choice == 9 && b.size() + 1 == n_layers)) {
            b.linear(pick(1, limits.max_channels), acts[pick(0, 2)]);
            flat = true;
            continue;
        }
        if (limits.allow_residual && choice == 8 && b.size() >= 2) {
            std::vector<std::size_t> sources;
            for (std::size_t j = 0; j + 1 < b.size(); ++j) {
                if (b.shape_of(j) == cur) sources.push_back(j);
            }
            if (!sources.empty()) {
                b.residual(sources[pick(0, sources.size() - 1)]);
                continue;
            }
        }
        if (limits.allow_linear && choice == 7 && b.size() + 2 <= n_layers) {
            b.gap();
            flat = true;
            continue;
        }
        const std::size_t k = (cur.height >= 3 && cur.width >= 3 && pick(0, 1)) ? 3 : 1;
        const std::size_t pad = k == 3 ? pick(0, 1) : 0;
        const std::size_t stride = (cur.height >= 4 && cur.width >= 4 && pick(0, 3) == 0) ? 2 : 1;
        const bool dw = pick(0, 3) == 0;
        b.conv(pick(1, limits.max_channels), k, stride, pad, acts[pick(0, 2)], dw);
    }
    return b.build();
}

std::vector<float> random_input(const TensorShape& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> v(shape.neuron_count());
    for (auto& x : v) x = dist(rng);
    return v;
}

}  // namespace splitinfer
