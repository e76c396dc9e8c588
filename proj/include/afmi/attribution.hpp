// SPDX-License-Identifier: Apache-2.0
#pragma once

// Attribution methods over a traced model.
//
// A-FMI couples the target image with a reference image. In the FC head each
// ReLU derivative is replaced by the secant slope between the two traces
//
//     s(y, y_ref) = (relu(y) - relu(y_ref)) / (y - y_ref)
//
// so that, layer by layer, x - x_ref = s * W * (x_prev - x_prev_ref) holds
// exactly. Sweeping the one-hot logit seed back with these slopes gives a
// modified gradient g over the feature stack satisfying
//
//     sum_i g_i * (A_i - A_ref_i) = y_c - y_ref_c.
//
// Feature-map importance is the per-channel mean of g, and the A-FMI map is
// sum_k FMI_k * (A^k - A_ref^k).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "afmi/model.hpp"
#include "afmi/tensor.hpp"

namespace afmi {

struct EstimatorConfig {
    /// Below this |y - y_ref| the estimator falls back to the plain derivative.
    double epsilon = 1e-7;

    void validate() const;
};

enum class Activation { relu };

/// Secant slope between y and y_ref; relu'(y) (with relu'(0) = 0) when |y - y_ref| < epsilon.
double taylor_estimator(double y, double y_ref, Activation activation, const EstimatorConfig& config);

struct HeadGradient {
    Tensor grad;                     // shape of the feature stack
    std::size_t fallback_count = 0;  // estimator evaluations that used the plain derivative
};

/// d^sigma y_c / dA via dynamic programming over the FC head.
HeadGradient modified_grad_fc_head(const Model& model, const ActivationTrace& trace, const ActivationTrace& ref_trace,
                                   std::size_t cls, const EstimatorConfig& config = {});

/// Plain dy_c / dA through the FC head (true ReLU derivatives).
Tensor plain_grad_fc_head(const Model& model, const ActivationTrace& trace, std::size_t cls);

/// dy_c / dx through the whole network.
Tensor input_gradient(const Model& model, const ActivationTrace& trace, std::size_t cls);

struct FmiVector {
    std::vector<float> scores;  // one per feature map
    std::size_t cls = 0;
    Reference reference;
};

/// Per-channel mean of a [K,...] gradient over the feature-map entries.
std::vector<float> channel_means(const Tensor& grad);

FmiVector fmi(const Model& model, const ActivationTrace& trace, const ActivationTrace& ref_trace, std::size_t cls,
              const EstimatorConfig& config = {});

enum class Method { afmi, gradcam, gradient, ig, random };

std::string_view to_string(Method method) noexcept;
/// Throws Error for unknown names.
Method parse_method(std::string_view name);

/// raw: signed map at the method's native resolution (feature-map for
/// afmi/gradcam, input for the rest). normalized = minmax(relu(upsampled)).
struct SaliencyMap {
    Tensor raw;
    Tensor upsampled;
    Tensor normalized;
    Method method = Method::afmi;
};

/// Half-pixel-centre bilinear resize of an [h,w] map (edge clamped).
Tensor bilinear_upsample(const Tensor& map, std::size_t height, std::size_t width);
/// relu then min-max to [0,1]; constant maps become all zeros.
Tensor normalize_saliency(const Tensor& map);
SaliencyMap finish_saliency(Tensor raw, std::size_t height, std::size_t width, Method method);

SaliencyMap afmi_saliency(const Model& model, const ActivationTrace& trace, const ActivationTrace& ref_trace,
                          std::size_t cls, const EstimatorConfig& config = {});

/// sum(raw A-FMI map) / (y_c - y_ref_c); NaN when the logit difference is 0.
double completeness_ratio(const SaliencyMap& afmi_map, const ActivationTrace& trace,
                          const ActivationTrace& ref_trace, std::size_t cls);

/// Per-pixel max over channels of |dy_c/dx|.
SaliencyMap gradient_saliency(const Model& model, const Tensor& input, std::size_t cls);

/// Signed (x - x_ref) * mean_t grad(x_ref + t/steps (x - x_ref)), t = 1..steps.
Tensor integrated_gradients_attributions(const Model& model, const Tensor& input, const Tensor& reference,
                                         std::size_t cls, std::size_t steps = 100);
SaliencyMap integrated_gradients(const Model& model, const Tensor& input, const Tensor& reference, std::size_t cls,
                                 std::size_t steps = 100);

std::vector<float> gradcam_weights(const Model& model, const ActivationTrace& trace, std::size_t cls);
SaliencyMap gradcam(const Model& model, const ActivationTrace& trace, std::size_t cls);

SaliencyMap random_saliency(std::size_t height, std::size_t width, std::uint64_t seed);

/// Everything a method needs besides the image: the reference and its trace.
struct AttributionContext {
    const Model* model = nullptr;
    Reference reference;
    Tensor reference_image;
    ActivationTrace reference_trace;
    EstimatorConfig estimator;
    std::size_t ig_steps = 100;
    std::uint64_t seed = 0;

    static AttributionContext make(const Model& model, const Reference& reference, const EstimatorConfig& estimator = {},
                                   std::uint64_t seed = 0);
};

/// `item` salts the seed of the random method so each image gets its own ranking.
SaliencyMap attribute(const AttributionContext& ctx, Method method, const Tensor& image, std::size_t cls,
                      std::uint64_t item = 0);

}  // namespace afmi
