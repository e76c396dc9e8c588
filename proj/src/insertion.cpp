// SPDX-License-Identifier: Apache-2.0
#include "afmi/insertion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "afmi/error.hpp"
#include "afmi/log.hpp"
#include "afmi/parallel.hpp"

namespace afmi {
namespace {

// log softmax of one class, in double
double log_prob(const Tensor& logits, std::size_t cls) {
    const double peak = *std::max_element(logits.data().begin(), logits.data().end());
    double total = 0.0;
    for (float v : logits.data()) total += std::exp(static_cast<double>(v) - peak);
    return static_cast<double>(logits[cls]) - peak - std::log(total);
}

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw Error("PI grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0 && grid[i] <= 1.0)) throw Error("PI values must lie in (0,1], got " + format_g6(grid[i]));
        if (i > 0 && !(grid[i] > grid[i - 1])) throw Error("PI grid must be strictly increasing");
    }
}

std::size_t spatial_size(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("insertion expects [C,H,W] images, got " + shape_string(image.shape()));
    return image.dim(1) * image.dim(2);
}

}  // namespace

PixelRanking rank_pixels(const Tensor& scores) {
    if (scores.rank() != 2) throw ShapeError("rank_pixels expects an [H,W] map, got " + shape_string(scores.shape()));
    PixelRanking r{scores.dim(0), scores.dim(1), std::vector<std::size_t>(scores.size())};
    std::iota(r.order.begin(), r.order.end(), std::size_t{0});
    std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return r;
}

PixelRanking rank_pixels(const SaliencyMap& saliency) { return rank_pixels(saliency.normalized); }

std::size_t insertion_count(double pi, std::size_t total) {
    // the small slack absorbs grid values like 0.15000000000000002
    const double exact = pi * static_cast<double>(total);
    const double count = std::ceil(exact - 1e-9 * std::max(1.0, exact));
    return static_cast<std::size_t>(std::clamp(count, 0.0, static_cast<double>(total)));
}

Tensor mask_insert(const Tensor& image, const PixelRanking& ranking, double pi, const Tensor& reference) {
    const std::size_t pixels = spatial_size(image);
    if (reference.shape() != image.shape()) throw ShapeError("image and reference shapes differ");
    if (ranking.order.size() != pixels || ranking.height != image.dim(1) || ranking.width != image.dim(2))
        throw ShapeError("ranking does not match the image resolution");
    Tensor out = reference;
    const std::size_t count = insertion_count(pi, pixels);
    for (std::size_t r = 0; r < count; ++r) {
        const std::size_t p = ranking.order[r];
        for (std::size_t c = 0; c < image.dim(0); ++c) out[c * pixels + p] = image[c * pixels + p];
    }
    return out;
}

std::string_view to_string(MetricKind kind) noexcept {
    return kind == MetricKind::accuracy ? "accuracy" : "softmax_ratio";
}

double auc(const MetricCurve& curve) {
    if (curve.points.empty()) return curve.anchor;
    double area = 0.0;
    double prev_pi = 0.0, prev_v = curve.anchor;
    for (const auto& p : curve.points) {
        area += 0.5 * (p.pi - prev_pi) * (p.value + prev_v);
        prev_pi = p.pi;
        prev_v = p.value;
    }
    return area / prev_pi;
}

std::vector<double> make_pi_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(lo > 0.0) || !(hi >= lo) || hi > 1.0 + 1e-12)
        throw Error("PI grid needs 0 < lo <= hi <= 1 and step > 0");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12;
    return grid;
}

std::vector<double> default_pi_grid() { return make_pi_grid(0.05, 1.0, 0.05); }

std::vector<double> parse_pi_grid(std::string_view text) {
    std::vector<double> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t colon = text.find(':', start);
        const std::string token(text.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start));
        char* end = nullptr;
        const double v = std::strtod(token.c_str(), &end);
        if (token.empty() || end != token.c_str() + token.size()) throw Error("bad PI grid '" + std::string(text) + "'");
        parts.push_back(v);
        if (colon == std::string_view::npos) break;
        start = colon + 1;
    }
    if (parts.size() == 1) return make_pi_grid(parts[0], parts[0], 1.0);
    if (parts.size() != 3) throw Error("PI grid must be lo:hi:step or a single value");
    return make_pi_grid(parts[0], parts[1], parts[2]);
}

double accuracy_at_pi(const Model& model, const Dataset& dataset, const SaliencyProvider& provider, double pi,
                      const Tensor& reference) {
    if (dataset.empty()) throw Error("dataset is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto ranking = provider(i, dataset.images[i], dataset.labels[i]);
        const Tensor masked = mask_insert(dataset.images[i], ranking, pi, reference);
        if (argmax(forward(masked, model).data()) == dataset.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double softmax_ratio_at_pi(const Model& model, const Dataset& dataset, const SaliencyProvider& provider, double pi,
                           const Tensor& reference) {
    if (dataset.empty()) throw Error("dataset is empty");
    double total = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::size_t c = dataset.labels[i];
        const double base = log_prob(forward(dataset.images[i], model), c);
        const auto ranking = provider(i, dataset.images[i], c);
        const Tensor masked = mask_insert(dataset.images[i], ranking, pi, reference);
        total += std::exp(log_prob(forward(masked, model), c) - base);
    }
    return total / static_cast<double>(dataset.size());
}

std::vector<MethodCurves> evaluate(const Model& model, const Dataset& dataset, const std::vector<NamedProvider>& methods,
                                   const Tensor& reference, const EvalOptions& options) {
    if (dataset.empty()) throw Error("dataset is empty");
    check_grid(options.pi_grid);
    const std::size_t n = dataset.size(), m = methods.size(), g = options.pi_grid.size();

    const Tensor ref_logits = forward(reference, model);
    const std::size_t ref_label = argmax(ref_logits.data());

    // per image: [method][pi] correctness and ratio, plus the anchor ratio
    std::vector<std::vector<std::uint8_t>> correct(n, std::vector<std::uint8_t>(m * g));
    std::vector<std::vector<double>> ratio(n, std::vector<double>(m * g));
    std::vector<double> anchor_ratio(n);

    parallel_for(n, options.threads, [&](std::size_t i) {
        const Tensor& image = dataset.images[i];
        const std::size_t c = dataset.labels[i];
        if (c >= model.num_classes()) throw Error("label " + std::to_string(c) + " out of range");
        const double base = log_prob(forward(image, model), c);
        anchor_ratio[i] = std::exp(log_prob(ref_logits, c) - base);
        for (std::size_t k = 0; k < m; ++k) {
            const PixelRanking ranking = methods[k].provider(i, image, c);
            for (std::size_t p = 0; p < g; ++p) {
                const Tensor logits = forward(mask_insert(image, ranking, options.pi_grid[p], reference), model);
                correct[i][k * g + p] = argmax(logits.data()) == c;
                ratio[i][k * g + p] = std::exp(log_prob(logits, c) - base);
            }
        }
        log::debug("evaluated image " + std::to_string(i));
    });

    double anchor_acc = 0.0, anchor_soft = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        anchor_acc += dataset.labels[i] == ref_label ? 1.0 : 0.0;
        anchor_soft += anchor_ratio[i];
    }
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<MethodCurves> results;
    for (std::size_t k = 0; k < m; ++k) {
        MethodCurves r{methods[k].name, {MetricKind::accuracy, anchor_acc * inv_n, {}, 0.0},
                       {MetricKind::softmax_ratio, anchor_soft * inv_n, {}, 0.0}};
        for (std::size_t p = 0; p < g; ++p) {
            double acc = 0.0, soft = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += correct[i][k * g + p];
                soft += ratio[i][k * g + p];
            }
            r.accuracy.points.push_back({options.pi_grid[p], acc * inv_n});
            r.softmax_ratio.points.push_back({options.pi_grid[p], soft * inv_n});
        }
        r.accuracy.auc = auc(r.accuracy);
        r.softmax_ratio.auc = auc(r.softmax_ratio);
        results.push_back(std::move(r));
    }
    return results;
}

NamedProvider method_provider(const AttributionContext& ctx, Method method) {
    return {std::string(to_string(method)), [&ctx, method](std::size_t index, const Tensor& image, std::size_t label) {
                return rank_pixels(attribute(ctx, method, image, label, index));
            }};
}

std::vector<MethodCurves> evaluate_methods(const Model& model, const Dataset& dataset, const std::vector<Method>& methods,
                                           const AttributionContext& ctx, const EvalOptions& options) {
    std::vector<NamedProvider> providers;
    for (auto method : methods) providers.push_back(method_provider(ctx, method));
    return evaluate(model, dataset, providers, ctx.reference_image, options);
}

double plain_accuracy(const Model& model, const Dataset& dataset, std::size_t threads) {
    if (dataset.empty()) throw Error("dataset is empty");
    std::vector<std::uint8_t> ok(dataset.size());
    parallel_for(dataset.size(), threads, [&](std::size_t i) {
        ok[i] = argmax(forward(dataset.images[i], model).data()) == dataset.labels[i];
    });
    return static_cast<double>(std::accumulate(ok.begin(), ok.end(), std::size_t{0})) /
           static_cast<double>(dataset.size());
}

std::string format_g6(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", value);
    return buf;
}

void write_curves_csv(std::ostream& out, const std::vector<MethodCurves>& results) {
    out << "method,metric,pi,value\n";
    for (const auto& r : results) {
        for (const MetricCurve* curve : {&r.accuracy, &r.softmax_ratio}) {
            out << r.method << ',' << to_string(curve->kind) << ",0," << format_g6(curve->anchor) << '\n';
            for (const auto& p : curve->points)
                out << r.method << ',' << to_string(curve->kind) << ',' << format_g6(p.pi) << ','
                    << format_g6(p.value) << '\n';
        }
    }
}

void write_auc_csv(std::ostream& out, const std::vector<MethodCurves>& results) {
    out << "method,accuracy_auc,softmax_auc\n";
    for (const auto& r : results)
        out << r.method << ',' << format_g6(r.accuracy.auc) << ',' << format_g6(r.softmax_ratio.auc) << '\n';
}

}  // namespace afmi
