// SPDX-License-Identifier: Apache-2.0
#include "afmi/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "afmi/error.hpp"

namespace afmi {
namespace {

enum class ReluRule { plain, taylor };

struct Sweep {
    const Model& model;
    const ActivationTrace& trace;
    const ActivationTrace* ref = nullptr;
    ReluRule rule = ReluRule::plain;
    EstimatorConfig config;
    std::size_t fallbacks = 0;

    // Propagates a gradient on the logits down to the input of layer `stop`.
    Tensor run(std::size_t cls, std::size_t stop) {
        const auto& layers = model.layers();
        Tensor g(model.output_shape(layers.size() - 1));
        g[cls] = 1.0f;
        for (std::size_t l = layers.size(); l-- > stop;) {
            const LayerSpec& layer = layers[l];
            const Shape& in_shape = model.layer_input_shape(l);
            switch (layer.kind) {
                case LayerKind::linear: g = linear_backward_data(g, model.weight(layer.weight)).reshaped(in_shape); break;
                case LayerKind::flatten: g = g.reshaped(in_shape); break;
                case LayerKind::gap: g = global_avg_pool_backward(g, in_shape); break;
                case LayerKind::maxpool: g = maxpool_backward(g, trace.pool_index.at(l), in_shape); break;
                case LayerKind::conv2d:
                    g = conv2d_backward_data(g, model.weight(layer.weight), layer.conv, in_shape);
                    break;
                case LayerKind::relu:
                    if (rule == ReluRule::plain) {
                        g = relu_backward(g, trace.pre_activation(l));
                    } else {
                        const Tensor& y = trace.pre_activation(l);
                        const Tensor& y_ref = ref->pre_activation(l);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            if (std::abs(static_cast<double>(y[i]) - static_cast<double>(y_ref[i])) < config.epsilon)
                                ++fallbacks;
                            g[i] = static_cast<float>(static_cast<double>(g[i]) *
                                                      taylor_estimator(y[i], y_ref[i], Activation::relu, config));
                        }
                    }
                    break;
            }
        }
        return g;
    }
};

void check_trace(const Model& model, const ActivationTrace& trace, const char* what) {
    if (trace.model_id != model.id() || trace.outputs.size() != model.layers().size())
        throw Error(std::string(what) + " was not produced by this model");
}

void check_class(const Model& model, std::size_t cls) {
    if (cls >= model.num_classes())
        throw Error("class " + std::to_string(cls) + " out of range for " + std::to_string(model.num_classes()) +
                    " classes");
}

std::pair<std::size_t, std::size_t> input_hw(const Model& model) {
    const Shape& in = model.input_shape();
    if (in.size() != 3) throw ShapeError("saliency maps need a [C,H,W] model input, got " + shape_string(in));
    return {in[1], in[2]};
}

const Tensor& spatial_features(const ActivationTrace& trace) {
    const Tensor& a = trace.feature_maps();
    if (a.rank() != 3) throw ShapeError("feature stack must be [K,h,w], got " + shape_string(a.shape()));
    return a;
}

// max over channels of |t| for a [C,H,W] tensor
Tensor collapse_channels(const Tensor& t) {
    const std::size_t channels = t.dim(0), h = t.dim(1), w = t.dim(2);
    Tensor out({h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        float best = 0.0f;
        for (std::size_t c = 0; c < channels; ++c) best = std::max(best, std::abs(t[c * h * w + i]));
        out[i] = best;
    }
    return out;
}

}  // namespace

void EstimatorConfig::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error("estimator epsilon must be a positive finite number");
}

double taylor_estimator(double y, double y_ref, Activation activation, const EstimatorConfig& config) {
    switch (activation) {
        case Activation::relu: {
            if (std::abs(y - y_ref) < config.epsilon) return y > 0.0 ? 1.0 : 0.0;
            return (std::max(0.0, y) - std::max(0.0, y_ref)) / (y - y_ref);
        }
    }
    return 0.0;
}

HeadGradient modified_grad_fc_head(const Model& model, const ActivationTrace& trace, const ActivationTrace& ref_trace,
                                   std::size_t cls, const EstimatorConfig& config) {
    config.validate();
    check_trace(model, trace, "trace");
    check_trace(model, ref_trace, "reference trace");
    check_class(model, cls);
    Sweep sweep{model, trace, &ref_trace, ReluRule::taylor, config};
    Tensor g = sweep.run(cls, model.head_begin());
    return {std::move(g), sweep.fallbacks};
}

Tensor plain_grad_fc_head(const Model& model, const ActivationTrace& trace, std::size_t cls) {
    check_trace(model, trace, "trace");
    check_class(model, cls);
    return Sweep{model, trace, nullptr, ReluRule::plain, {}}.run(cls, model.head_begin());
}

Tensor input_gradient(const Model& model, const ActivationTrace& trace, std::size_t cls) {
    check_trace(model, trace, "trace");
    check_class(model, cls);
    return Sweep{model, trace, nullptr, ReluRule::plain, {}}.run(cls, 0);
}

std::vector<float> channel_means(const Tensor& grad) {
    const std::size_t k = grad.dim(0);
    const std::size_t n = grad.size() / k;
    std::vector<float> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += grad[c * n + i];
        out[c] = static_cast<float>(s / static_cast<double>(n));
    }
    return out;
}

FmiVector fmi(const Model& model, const ActivationTrace& trace, const ActivationTrace& ref_trace, std::size_t cls,
              const EstimatorConfig& config) {
    const auto head = modified_grad_fc_head(model, trace, ref_trace, cls, config);
    return {channel_means(head.grad), cls, {}};
}

std::string_view to_string(Method method) noexcept {
    switch (method) {
        case Method::afmi: return "afmi";
        case Method::gradcam: return "gradcam";
        case Method::gradient: return "gradient";
        case Method::ig: return "ig";
        case Method::random: return "random";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (auto m : {Method::afmi, Method::gradcam, Method::gradient, Method::ig, Method::random})
        if (name == to_string(m)) return m;
    throw Error("unknown method '" + std::string(name) + "' (expected afmi, gradcam, gradient, ig or random)");
}

Tensor bilinear_upsample(const Tensor& map, std::size_t height, std::size_t width) {
    if (map.rank() != 2) throw ShapeError("bilinear_upsample expects [h,w], got " + shape_string(map.shape()));
    const std::size_t in_h = map.dim(0), in_w = map.dim(1);
    Tensor out({height, width});
    const double sy = static_cast<double>(in_h) / static_cast<double>(height);
    const double sx = static_cast<double>(in_w) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = (1.0 - wx) * map[y0 * in_w + x0] + wx * map[y0 * in_w + x1];
            const double bottom = (1.0 - wx) * map[y1 * in_w + x0] + wx * map[y1 * in_w + x1];
            out[y * width + x] = static_cast<float>((1.0 - wy) * top + wy * bottom);
        }
    }
    return out;
}

Tensor normalize_saliency(const Tensor& map) {
    Tensor clipped = relu(map);
    const auto [lo, hi] = std::minmax_element(clipped.data().begin(), clipped.data().end());
    const double mn = *lo, span = static_cast<double>(*hi) - static_cast<double>(*lo);
    Tensor out(map.shape());
    if (!(span > 0.0)) return out;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>((static_cast<double>(clipped[i]) - mn) / span);
    return out;
}

SaliencyMap finish_saliency(Tensor raw, std::size_t height, std::size_t width, Method method) {
    SaliencyMap s;
    s.method = method;
    s.upsampled = raw.shape() == Shape{height, width} ? raw : bilinear_upsample(raw, height, width);
    s.normalized = normalize_saliency(s.upsampled);
    s.raw = std::move(raw);
    return s;
}

SaliencyMap afmi_saliency(const Model& model, const ActivationTrace& trace, const ActivationTrace& ref_trace,
                          std::size_t cls, const EstimatorConfig& config) {
    const auto [height, width] = input_hw(model);
    const Tensor& a = spatial_features(trace);
    const Tensor& a_ref = ref_trace.feature_maps();
    const std::vector<float> weights = fmi(model, trace, ref_trace, cls, config).scores;
    const std::size_t k = a.dim(0), h = a.dim(1), w = a.dim(2), n = h * w;
    std::vector<double> acc(n, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const double wc = weights[c];
        if (wc == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i)
            acc[i] += wc * (static_cast<double>(a[c * n + i]) - static_cast<double>(a_ref[c * n + i]));
    }
    Tensor raw({h, w});
    std::transform(acc.begin(), acc.end(), raw.data().begin(), [](double v) { return static_cast<float>(v); });
    return finish_saliency(std::move(raw), height, width, Method::afmi);
}

double completeness_ratio(const SaliencyMap& afmi_map, const ActivationTrace& trace, const ActivationTrace& ref_trace,
                          std::size_t cls) {
    double total = 0.0;
    for (float v : afmi_map.raw.data()) total += v;
    const double delta = static_cast<double>(trace.logits()[cls]) - static_cast<double>(ref_trace.logits()[cls]);
    if (delta == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return total / delta;
}

SaliencyMap gradient_saliency(const Model& model, const Tensor& input, std::size_t cls) {
    const auto [height, width] = input_hw(model);
    const Tensor g = input_gradient(model, forward_with_trace(model, input), cls);
    return finish_saliency(collapse_channels(g), height, width, Method::gradient);
}

Tensor integrated_gradients_attributions(const Model& model, const Tensor& input, const Tensor& reference,
                                         std::size_t cls, std::size_t steps) {
    if (steps == 0) throw Error("integrated gradients needs at least one step");
    if (input.shape() != reference.shape()) throw ShapeError("input and reference shapes differ");
    std::vector<double> acc(input.size(), 0.0);
    Tensor point(input.shape());
    for (std::size_t t = 1; t <= steps; ++t) {
        const float alpha = static_cast<float>(static_cast<double>(t) / static_cast<double>(steps));
        for (std::size_t i = 0; i < input.size(); ++i) point[i] = reference[i] + alpha * (input[i] - reference[i]);
        const Tensor g = input_gradient(model, forward_with_trace(model, point), cls);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
    Tensor out(input.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>((static_cast<double>(input[i]) - static_cast<double>(reference[i])) * acc[i] /
                                    static_cast<double>(steps));
    return out;
}

SaliencyMap integrated_gradients(const Model& model, const Tensor& input, const Tensor& reference, std::size_t cls,
                                 std::size_t steps) {
    const auto [height, width] = input_hw(model);
    const Tensor ig = integrated_gradients_attributions(model, input, reference, cls, steps);
    return finish_saliency(collapse_channels(ig), height, width, Method::ig);
}

std::vector<float> gradcam_weights(const Model& model, const ActivationTrace& trace, std::size_t cls) {
    return channel_means(plain_grad_fc_head(model, trace, cls));
}

SaliencyMap gradcam(const Model& model, const ActivationTrace& trace, std::size_t cls) {
    const auto [height, width] = input_hw(model);
    const Tensor& a = spatial_features(trace);
    const std::vector<float> weights = gradcam_weights(model, trace, cls);
    const std::size_t k = a.dim(0), h = a.dim(1), w = a.dim(2), n = h * w;
    std::vector<double> acc(n, 0.0);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t i = 0; i < n; ++i) acc[i] += static_cast<double>(weights[c]) * a[c * n + i];
    Tensor raw({h, w});
    std::transform(acc.begin(), acc.end(), raw.data().begin(),
                   [](double v) { return static_cast<float>(std::max(0.0, v)); });
    return finish_saliency(std::move(raw), height, width, Method::gradcam);
}

SaliencyMap random_saliency(std::size_t height, std::size_t width, std::uint64_t seed) {
    UniformStream rng(seed);
    Tensor raw({height, width});
    for (auto& v : raw.data()) v = static_cast<float>(rng.next());
    return finish_saliency(std::move(raw), height, width, Method::random);
}

AttributionContext AttributionContext::make(const Model& model, const Reference& reference,
                                            const EstimatorConfig& estimator, std::uint64_t seed) {
    estimator.validate();
    AttributionContext ctx;
    ctx.model = &model;
    ctx.reference = reference;
    ctx.reference_image = make_reference(reference, model.input_shape(), model.normalization());
    ctx.reference_trace = forward_with_trace(model, ctx.reference_image);
    ctx.estimator = estimator;
    ctx.seed = seed;
    return ctx;
}

SaliencyMap attribute(const AttributionContext& ctx, Method method, const Tensor& image, std::size_t cls,
                      std::uint64_t item) {
    const Model& model = *ctx.model;
    check_class(model, cls);
    switch (method) {
        case Method::afmi:
            return afmi_saliency(model, forward_with_trace(model, image), ctx.reference_trace, cls, ctx.estimator);
        case Method::gradcam: return gradcam(model, forward_with_trace(model, image), cls);
        case Method::gradient: return gradient_saliency(model, image, cls);
        case Method::ig: return integrated_gradients(model, image, ctx.reference_image, cls, ctx.ig_steps);
        case Method::random: {
            const auto [height, width] = input_hw(model);
            return random_saliency(height, width, mix_seed(ctx.seed, item));
        }
    }
    throw Error("unhandled method");
}

}  // namespace afmi
