// SPDX-License-Identifier: Apache-2.0
#include "afmi/model.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>

#include "afmi/error.hpp"

namespace afmi {
namespace {

std::atomic<std::uint64_t> next_model_id{1};

[[noreturn]] void fail(FormatErrc code, const std::string& what) { throw FormatError(code, what); }

std::string layer_label(std::size_t index, const LayerSpec& layer) {
    std::string s = "layer " + std::to_string(index) + " (" + std::string(to_string(layer.kind));
    if (!layer.name.empty()) s += " '" + layer.name + "'";
    return s + ")";
}

bool is_head_kind(LayerKind kind) {
    return kind == LayerKind::flatten || kind == LayerKind::gap || kind == LayerKind::linear ||
           kind == LayerKind::relu;
}

}  // namespace

std::string_view to_string(LayerKind kind) noexcept {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::flatten: return "flatten";
        case LayerKind::linear: return "linear";
        case LayerKind::gap: return "gap";
    }
    return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) noexcept {
    for (auto kind : {LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool, LayerKind::flatten, LayerKind::linear,
                      LayerKind::gap})
        if (name == to_string(kind)) return kind;
    return std::nullopt;
}

float Normalization::apply(float value, std::size_t channel) const noexcept {
    if (mean.empty()) return value;
    const float m = mean.size() == 1 ? mean[0] : mean[channel];
    const float s = stddev.size() == 1 ? stddev[0] : stddev[channel];
    return (value - m) / s;
}

Model Model::create(ModelSpec spec, std::map<std::string, Tensor> weights) {
    Model model;
    const Shape& in = spec.input_shape;
    if (in.empty() || std::any_of(in.begin(), in.end(), [](auto d) { return d == 0; }))
        fail(FormatErrc::invalid_spec, "input shape " + shape_string(in) + " is not valid");
    if (spec.num_classes == 0) fail(FormatErrc::invalid_spec, "class count must be positive");
    if (spec.layers.empty()) fail(FormatErrc::invalid_spec, "model has no layers");

    const auto& norm = spec.normalization;
    if (norm.mean.size() != norm.stddev.size())
        fail(FormatErrc::invalid_spec, "normalization mean/std lengths differ");
    if (!norm.mean.empty() && norm.mean.size() != 1 && (in.size() != 3 || norm.mean.size() != in[0]))
        fail(FormatErrc::invalid_spec, "normalization needs 1 or one-per-channel entries");
    if (std::any_of(norm.stddev.begin(), norm.stddev.end(), [](float s) { return !(s > 0.0f); }))
        fail(FormatErrc::invalid_spec, "normalization std must be positive");

    auto tensor = [&](const std::string& name, std::size_t index, const LayerSpec& layer) -> const Tensor& {
        auto it = weights.find(name);
        if (name.empty() || it == weights.end())
            fail(FormatErrc::invalid_spec, layer_label(index, layer) + " references unknown tensor '" + name + "'");
        return it->second;
    };

    std::optional<std::size_t> tagged;
    std::optional<std::size_t> last_conv_seen;
    Shape cur = in;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        const std::string label = layer_label(i, layer);
        if (layer.last_conv) {
            if (layer.kind != LayerKind::conv2d) fail(FormatErrc::invalid_spec, label + " carries last-conv tag");
            if (tagged) fail(FormatErrc::invalid_spec, "more than one last-conv tag");
            tagged = i;
        }
        switch (layer.kind) {
            case LayerKind::conv2d: {
                last_conv_seen = i;
                const Tensor& w = tensor(layer.weight, i, layer);
                const Tensor& b = tensor(layer.bias, i, layer);
                if (cur.size() != 3) fail(FormatErrc::shape_mismatch, label + " input " + shape_string(cur));
                if (w.rank() != 4 || w.dim(1) != cur[0])
                    fail(FormatErrc::shape_mismatch,
                         label + " weight " + shape_string(w.shape()) + " vs input " + shape_string(cur));
                if (b.shape() != Shape{w.dim(0)})
                    fail(FormatErrc::shape_mismatch, label + " bias " + shape_string(b.shape()));
                try {
                    cur = conv2d_output_shape(cur, w.shape(), layer.conv);
                } catch (const ShapeError& e) {
                    fail(FormatErrc::shape_mismatch, label + ": " + e.what());
                }
                break;
            }
            case LayerKind::maxpool:
                if (cur.size() != 3) fail(FormatErrc::shape_mismatch, label + " input " + shape_string(cur));
                try {
                    cur = maxpool_output_shape(cur, layer.pool_kernel, layer.pool_stride);
                } catch (const ShapeError& e) {
                    fail(FormatErrc::shape_mismatch, label + ": " + e.what());
                }
                break;
            case LayerKind::relu: break;
            case LayerKind::flatten: cur = {shape_size(cur)}; break;
            case LayerKind::gap:
                if (cur.size() != 3) fail(FormatErrc::shape_mismatch, label + " input " + shape_string(cur));
                cur = {cur[0]};
                break;
            case LayerKind::linear: {
                const Tensor& w = tensor(layer.weight, i, layer);
                const Tensor& b = tensor(layer.bias, i, layer);
                if (cur.size() != 1) fail(FormatErrc::invalid_spec, label + " needs flattened input, got " + shape_string(cur));
                if (w.rank() != 2 || w.dim(1) != cur[0])
                    fail(FormatErrc::shape_mismatch,
                         label + " weight " + shape_string(w.shape()) + " vs input " + shape_string(cur));
                if (b.shape() != Shape{w.dim(0)})
                    fail(FormatErrc::shape_mismatch, label + " bias " + shape_string(b.shape()));
                cur = {w.dim(0)};
                break;
            }
        }
        model.shapes_.push_back(cur);
    }

    if (last_conv_seen && !tagged) fail(FormatErrc::missing_last_conv, "model has conv2d layers but no last-conv tag");
    if (tagged && *tagged != *last_conv_seen)
        fail(FormatErrc::invalid_spec, "last-conv tag is not on the final conv2d layer");

    if (tagged) {
        std::size_t f = *tagged;
        while (f + 1 < spec.layers.size() &&
               (spec.layers[f + 1].kind == LayerKind::relu || spec.layers[f + 1].kind == LayerKind::maxpool))
            ++f;
        model.feature_layer_ = f;
    }
    const std::size_t head = model.feature_layer_ ? *model.feature_layer_ + 1 : 0;
    for (std::size_t i = head; i < spec.layers.size(); ++i)
        if (!is_head_kind(spec.layers[i].kind))
            fail(FormatErrc::invalid_spec, layer_label(i, spec.layers[i]) + " is not allowed in the FC head");
    if (spec.layers.back().kind != LayerKind::linear)
        fail(FormatErrc::invalid_spec, "the final layer must be linear (logits)");
    if (cur != Shape{spec.num_classes})
        fail(FormatErrc::shape_mismatch,
             "logits " + shape_string(cur) + " vs class count " + std::to_string(spec.num_classes));

    model.spec_ = std::move(spec);
    model.weights_ = std::move(weights);
    model.id_ = next_model_id.fetch_add(1);
    return model;
}

const Tensor& Model::weight(const std::string& name) const {
    auto it = weights_.find(name);
    if (it == weights_.end()) throw Error("unknown weight tensor '" + name + "'");
    return it->second;
}

ActivationTrace forward_with_trace(const Model& model, const Tensor& input) {
    if (input.shape() != model.input_shape())
        throw ShapeError("input " + shape_string(input.shape()) + " does not match model input " +
                         shape_string(model.input_shape()));
    ActivationTrace trace;
    trace.model_id = model.id();
    trace.input = input;
    trace.feature_layer = model.feature_layer();
    const auto& layers = model.layers();
    trace.outputs.reserve(layers.size());
    trace.pool_index.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& layer = layers[i];
        const Tensor& x = i == 0 ? trace.input : trace.outputs.back();
        switch (layer.kind) {
            case LayerKind::conv2d:
                trace.outputs.push_back(
                    conv2d_forward(x, model.weight(layer.weight), model.weight(layer.bias), layer.conv));
                break;
            case LayerKind::relu: trace.outputs.push_back(relu(x)); break;
            case LayerKind::maxpool: {
                auto pooled = maxpool_forward(x, layer.pool_kernel, layer.pool_stride);
                trace.pool_index[i] = std::move(pooled.index);
                trace.outputs.push_back(std::move(pooled.output));
                break;
            }
            case LayerKind::flatten: trace.outputs.push_back(x.reshaped({x.size()})); break;
            case LayerKind::gap: trace.outputs.push_back(global_avg_pool(x)); break;
            case LayerKind::linear:
                trace.outputs.push_back(linear_forward(x, model.weight(layer.weight), model.weight(layer.bias)));
                break;
        }
    }
    return trace;
}

Tensor forward(const Tensor& input, const Model& model) { return forward_with_trace(model, input).logits(); }

std::size_t argmax(std::span<const float> values) noexcept {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

Prediction predict(const Model& model, const Tensor& input) {
    Tensor logits = forward(input, model);
    return {argmax(logits.data()), softmax(logits)};
}

Reference parse_reference(std::string_view text) {
    if (text == "black") return {ReferenceKind::black, 0};
    if (text == "white") return {ReferenceKind::white, 0};
    constexpr std::string_view prefix = "random:";
    if (text.substr(0, prefix.size()) == prefix) {
        const auto digits = text.substr(prefix.size());
        std::uint64_t seed = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (ec == std::errc() && ptr == digits.data() + digits.size() && !digits.empty())
            return {ReferenceKind::random, seed};
    }
    throw Error("unknown reference '" + std::string(text) + "' (expected black, white or random:<seed>)");
}

std::string to_string(const Reference& reference) {
    switch (reference.kind) {
        case ReferenceKind::black: return "black";
        case ReferenceKind::white: return "white";
        case ReferenceKind::random: return "random:" + std::to_string(reference.seed);
    }
    return "?";
}

Tensor make_reference(const Reference& reference, const Shape& input_shape, const Normalization& normalization) {
    Tensor out(input_shape);
    const std::size_t channels = input_shape.size() == 3 ? input_shape[0] : 1;
    const std::size_t per_channel = out.size() / channels;
    UniformStream rng(reference.seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
        float raw = 0.0f;
        switch (reference.kind) {
            case ReferenceKind::black: raw = 0.0f; break;
            case ReferenceKind::white: raw = 1.0f; break;
            case ReferenceKind::random: raw = static_cast<float>(rng.next()); break;
        }
        out[i] = normalization.apply(raw, i / per_channel);
    }
    return out;
}

UniformStream::UniformStream(std::uint64_t seed) : engine_(seed) {}

double UniformStream::next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace afmi
