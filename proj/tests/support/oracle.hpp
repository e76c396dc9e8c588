// SPDX-License-Identifier: Apache-2.0
#pragma once

// Test-only helpers: random model builders and a brute-force float64 forward
// pass that shares no code with the library kernels.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "afmi/model.hpp"

namespace afmi::test {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo = 0.0, double hi = 1.0) {
        return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
    }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
    Tensor tensor(Shape shape, double lo = -1.0, double hi = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = static_cast<float>(uniform(lo, hi));
        return t;
    }

private:
    std::mt19937_64 engine_;
};

struct DoubleTrace {
    std::vector<double> logits;
    // signs of every ReLU input and the argmax of every pool window, for kink detection
    std::vector<std::int64_t> pattern;
};

inline DoubleTrace reference_forward(const Model& model, const std::vector<double>& input) {
    DoubleTrace out;
    Shape shape = model.input_shape();
    std::vector<double> x = input;
    for (const auto& layer : model.layers()) {
        switch (layer.kind) {
            case LayerKind::conv2d: {
                const Tensor& w = model.weight(layer.weight);
                const Tensor& b = model.weight(layer.bias);
                const auto c_in = shape[0], h = shape[1], wd = shape[2];
                const auto c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
                const auto& p = layer.conv;
                const auto oh = (h + 2 * p.pad_h - kh) / p.stride_h + 1;
                const auto ow = (wd + 2 * p.pad_w - kw) / p.stride_w + 1;
                std::vector<double> y(c_out * oh * ow);
                for (std::size_t o = 0; o < c_out; ++o)
                    for (std::size_t i = 0; i < oh; ++i)
                        for (std::size_t j = 0; j < ow; ++j) {
                            double s = b[o];
                            for (std::size_t c = 0; c < c_in; ++c)
                                for (std::size_t u = 0; u < kh; ++u)
                                    for (std::size_t v = 0; v < kw; ++v) {
                                        const long yy = static_cast<long>(i * p.stride_h + u) - static_cast<long>(p.pad_h);
                                        const long xx = static_cast<long>(j * p.stride_w + v) - static_cast<long>(p.pad_w);
                                        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(wd))
                                            continue;
                                        s += static_cast<double>(w[((o * c_in + c) * kh + u) * kw + v]) *
                                             x[(c * h + static_cast<std::size_t>(yy)) * wd + static_cast<std::size_t>(xx)];
                                    }
                            y[(o * oh + i) * ow + j] = s;
                        }
                x = std::move(y);
                shape = {c_out, oh, ow};
                break;
            }
            case LayerKind::relu:
                for (auto& v : x) {
                    out.pattern.push_back(v > 0.0);
                    v = std::max(0.0, v);
                }
                break;
            case LayerKind::maxpool: {
                const auto c = shape[0], h = shape[1], wd = shape[2];
                const auto k = layer.pool_kernel, s = layer.pool_stride;
                const auto oh = (h - k) / s + 1, ow = (wd - k) / s + 1;
                std::vector<double> y(c * oh * ow);
                for (std::size_t ch = 0; ch < c; ++ch)
                    for (std::size_t i = 0; i < oh; ++i)
                        for (std::size_t j = 0; j < ow; ++j) {
                            double best = -INFINITY;
                            std::int64_t arg = -1;
                            for (std::size_t u = 0; u < k; ++u)
                                for (std::size_t v = 0; v < k; ++v) {
                                    const double val = x[(ch * h + i * s + u) * wd + j * s + v];
                                    if (val > best) {
                                        best = val;
                                        arg = static_cast<std::int64_t>(u * k + v);
                                    }
                                }
                            out.pattern.push_back(arg);
                            y[(ch * oh + i) * ow + j] = best;
                        }
                x = std::move(y);
                shape = {c, oh, ow};
                break;
            }
            case LayerKind::flatten: shape = {x.size()}; break;
            case LayerKind::gap: {
                const auto c = shape[0], n = shape[1] * shape[2];
                std::vector<double> y(c, 0.0);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    for (std::size_t i = 0; i < n; ++i) y[ch] += x[ch * n + i];
                    y[ch] /= static_cast<double>(n);
                }
                x = std::move(y);
                shape = {c};
                break;
            }
            case LayerKind::linear: {
                const Tensor& w = model.weight(layer.weight);
                const Tensor& b = model.weight(layer.bias);
                std::vector<double> y(w.dim(0));
                for (std::size_t r = 0; r < w.dim(0); ++r) {
                    double s = b[r];
                    for (std::size_t c = 0; c < w.dim(1); ++c) s += static_cast<double>(w[r * w.dim(1) + c]) * x[c];
                    y[r] = s;
                }
                x = std::move(y);
                shape = {x.size()};
                break;
            }
        }
    }
    out.logits = std::move(x);
    return out;
}

inline std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

struct ModelBuilder {
    ModelSpec spec;
    std::map<std::string, Tensor> weights;
    Rng* rng = nullptr;
    double scale = 1.0;

    void conv(std::size_t out_ch, std::size_t in_ch, std::size_t k, ConvParams params = {}, bool tag = false) {
        const std::string name = "conv" + std::to_string(spec.layers.size());
        const double bound = scale / std::sqrt(static_cast<double>(in_ch * k * k));
        weights[name + ".w"] = rng->tensor({out_ch, in_ch, k, k}, -bound, bound);
        weights[name + ".b"] = rng->tensor({out_ch}, -0.1 * scale, 0.1 * scale);
        LayerSpec l{LayerKind::conv2d, name, name + ".w", name + ".b", params};
        l.last_conv = tag;
        spec.layers.push_back(l);
    }
    void linear(std::size_t out, std::size_t in) {
        const std::string name = "fc" + std::to_string(spec.layers.size());
        const double bound = scale / std::sqrt(static_cast<double>(in));
        weights[name + ".w"] = rng->tensor({out, in}, -bound, bound);
        weights[name + ".b"] = rng->tensor({out}, -0.2 * scale, 0.2 * scale);
        spec.layers.push_back({LayerKind::linear, name, name + ".w", name + ".b"});
    }
    void relu() { spec.layers.push_back({LayerKind::relu}); }
    void flatten() { spec.layers.push_back({LayerKind::flatten}); }
    void gap() { spec.layers.push_back({LayerKind::gap}); }
    void maxpool(std::size_t k, std::size_t s) {
        LayerSpec l{LayerKind::maxpool};
        l.pool_kernel = k;
        l.pool_stride = s;
        spec.layers.push_back(l);
    }
    Model build() { return Model::create(spec, weights); }
};

/// conv trunk (tagged) + flatten + `hidden` ReLU layers + logits.
inline Model random_head_model(Rng& rng, std::size_t hidden, std::size_t classes = 5) {
    ModelBuilder b;
    b.rng = &rng;
    const std::size_t k = 2 + rng.index(4);
    b.spec.input_shape = {2, 5, 5};
    b.spec.num_classes = classes;
    b.conv(k, 2, 3, {}, true);
    b.relu();
    b.flatten();
    std::size_t width = k * 9;
    for (std::size_t h = 0; h < hidden; ++h) {
        const std::size_t next = 4 + rng.index(61);
        b.linear(next, width);
        b.relu();
        width = next;
    }
    b.linear(classes, width);
    return b.build();
}

/// Small CNN with conv/relu/maxpool trunk and a one-hidden-layer head.
inline Model random_small_cnn(Rng& rng) {
    ModelBuilder b;
    b.rng = &rng;
    b.spec.input_shape = {2, 8, 8};
    b.spec.num_classes = 4;
    const std::size_t c1 = 2 + rng.index(3), c2 = 3 + rng.index(3);
    b.conv(c1, 2, 3, {1, 1, 1, 1});
    b.relu();
    b.conv(c2, c1, 3, {2, 2, 0, 0}, true);
    b.relu();
    const std::size_t pool = 1 + rng.index(2);
    b.maxpool(pool, 1);
    b.flatten();
    const std::size_t side = 3 - pool + 1;
    b.linear(6, c2 * side * side);
    b.relu();
    b.linear(4, 6);
    return b.build();
}

/// Conv-free model built from explicit dense layers, with a ReLU between consecutive ones.
inline Model dense_model(Shape input, const std::vector<std::pair<Tensor, Tensor>>& layers,
                         bool relu_between = true) {
    ModelSpec spec;
    spec.input_shape = std::move(input);
    spec.num_classes = layers.back().first.dim(0);
    std::map<std::string, Tensor> weights;
    if (spec.input_shape.size() != 1) spec.layers.push_back({LayerKind::flatten});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string name = "fc" + std::to_string(i);
        weights[name + ".w"] = layers[i].first;
        weights[name + ".b"] = layers[i].second;
        spec.layers.push_back({LayerKind::linear, name, name + ".w", name + ".b"});
        if (relu_between && i + 1 < layers.size()) spec.layers.push_back({LayerKind::relu});
    }
    return Model::create(spec, weights);
}

/// F(a) = relu(-relu(-a + 1) + 2), followed by an identity logit layer.
inline Model toy_model() {
    return dense_model({1}, {{Tensor::from({1, 1}, {-1}), Tensor::from({1}, {1})},
                             {Tensor::from({1, 1}, {-1}), Tensor::from({1}, {2})},
                             {Tensor::from({1, 1}, {1}), Tensor::from({1}, {0})}});
}

/// conv trunk (tagged) + flatten + a single linear layer.
inline Model random_linear_head_model(Rng& rng, std::size_t classes = 5) {
    ModelBuilder b;
    b.rng = &rng;
    const std::size_t k = 2 + rng.index(5);
    b.spec.input_shape = {2, 6, 6};
    b.spec.num_classes = classes;
    b.conv(k, 2, 3, {}, true);
    b.relu();
    if (rng.index(2) == 0) {
        b.flatten();
        b.linear(classes, k * 16);
    } else {
        b.gap();
        b.linear(classes, k);
    }
    return b.build();
}

inline std::string data_path(const std::string& rel) { return std::string(AFMI_DATA_DIR) + "/" + rel; }

}  // namespace afmi::test
