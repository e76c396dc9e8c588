// SPDX-License-Identifier: Apache-2.0
#pragma once

// Insertion protocol: rank pixels by saliency, paste the top PI fraction of
// them onto a reference canvas (black by default) and measure classification
// accuracy and the softmax ratio p~_c / p_c of the true class.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "afmi/attribution.hpp"
#include "afmi/dataset.hpp"
#include "afmi/model.hpp"

namespace afmi {

/// Spatial positions (row-major flat indices), most salient first.
struct PixelRanking {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::size_t> order;
};

/// Descending by score; equal scores keep row-major order.
PixelRanking rank_pixels(const Tensor& scores);
PixelRanking rank_pixels(const SaliencyMap& saliency);

/// Number of pixels inserted at fraction pi: ceil(pi * total).
std::size_t insertion_count(double pi, std::size_t total);

/// Top-ranked positions take every channel from `image`, the rest from `reference`.
Tensor mask_insert(const Tensor& image, const PixelRanking& ranking, double pi, const Tensor& reference);

enum class MetricKind { accuracy, softmax_ratio };
std::string_view to_string(MetricKind kind) noexcept;

struct MetricPoint {
    double pi = 0.0;
    double value = 0.0;
};

struct MetricCurve {
    MetricKind kind = MetricKind::accuracy;
    double anchor = 0.0;  // value at PI = 0 (pure reference)
    std::vector<MetricPoint> points;
    double auc = 0.0;
};

/// Trapezoidal area over (0, anchor) + points, divided by the PI span.
double auc(const MetricCurve& curve);

/// lo:hi:step, inclusive; values rounded to 1e-12 so 0.05*k grids are exact-ish.
std::vector<double> make_pi_grid(double lo, double hi, double step);
std::vector<double> default_pi_grid();
std::vector<double> parse_pi_grid(std::string_view text);

/// Ranking for one dataset item, computed against its ground-truth label.
using SaliencyProvider = std::function<PixelRanking(std::size_t index, const Tensor& image, std::size_t label)>;

double accuracy_at_pi(const Model& model, const Dataset& dataset, const SaliencyProvider& provider, double pi,
                      const Tensor& reference);
double softmax_ratio_at_pi(const Model& model, const Dataset& dataset, const SaliencyProvider& provider, double pi,
                           const Tensor& reference);

struct EvalOptions {
    std::vector<double> pi_grid = default_pi_grid();
    std::size_t threads = 1;
};

struct MethodCurves {
    std::string method;
    MetricCurve accuracy;
    MetricCurve softmax_ratio;
};

struct NamedProvider {
    std::string name;
    SaliencyProvider provider;
};

/// Both curves for every provider. Per-image work may run in parallel; sums
/// are reduced in image order.
std::vector<MethodCurves> evaluate(const Model& model, const Dataset& dataset, const std::vector<NamedProvider>& methods,
                                   const Tensor& reference, const EvalOptions& options);

/// Providers for the built-in methods on top of an attribution context.
NamedProvider method_provider(const AttributionContext& ctx, Method method);

std::vector<MethodCurves> evaluate_methods(const Model& model, const Dataset& dataset, const std::vector<Method>& methods,
                                           const AttributionContext& ctx, const EvalOptions& options);

/// Plain top-1 accuracy on unmodified images.
double plain_accuracy(const Model& model, const Dataset& dataset, std::size_t threads = 1);

/// `method,metric,pi,value` including the PI=0 anchor row.
void write_curves_csv(std::ostream& out, const std::vector<MethodCurves>& results);
/// `method,accuracy_auc,softmax_auc`
void write_auc_csv(std::ostream& out, const std::vector<MethodCurves>& results);

/// %.6g
std::string format_g6(double value);

}  // namespace afmi
