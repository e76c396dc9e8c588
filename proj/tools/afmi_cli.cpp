// SPDX-License-Identifier: Apache-2.0
// afmi <predict|attribute|evaluate|faithfulness>
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "afmi/attribution.hpp"
#include "afmi/dataset.hpp"
#include "afmi/error.hpp"
#include "afmi/faithfulness.hpp"
#include "afmi/insertion.hpp"
#include "afmi/log.hpp"
#include "afmi/model.hpp"
#include "afmi/pgm.hpp"

namespace fs = std::filesystem;
using namespace afmi;

namespace {

struct RunConfig {
    std::string model;
    std::string image;  // PGM
    std::string images;
    std::string labels;
    std::string train_images;
    std::string train_labels;
    std::size_t index = 0;
    std::size_t limit = 0;
    std::size_t train_limit = 0;
    std::string method = "afmi";
    std::string reference = "black";
    int cls = -1;
    std::string pi_grid = "0.05:1:0.05";
    double epsilon = 1e-7;
    std::string out = ".";
    std::size_t threads = 1;
    std::uint64_t seed = 0;
    std::size_t ig_steps = 100;
};

Dataset limited(Dataset ds, std::size_t limit) { return limit ? ds.slice(0, limit) : ds; }

Tensor load_pgm_input(const Model& model, const std::string& path) {
    const GrayImage img = read_pgm_file(path);
    const Shape want = model.input_shape();
    if (want != Shape{1, img.height, img.width})
        throw Error("PGM is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                    " but the model expects " + shape_string(want));
    Tensor t(want);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = model.normalization().apply(static_cast<float>(img.pixels[i]) / 255.0f, 0);
    return t;
}

// Single input: a PGM file or one item of an IDX pair. Label is known only for IDX.
std::pair<Tensor, std::optional<std::size_t>> load_single(const Model& model, const RunConfig& cfg) {
    if (!cfg.image.empty()) return {load_pgm_input(model, cfg.image), std::nullopt};
    if (cfg.images.empty() || cfg.labels.empty()) throw Error("pass --image, or --images and --labels with --index");
    Dataset ds = load_mnist_idx_files(cfg.images, cfg.labels, model.normalization());
    if (cfg.index >= ds.size())
        throw Error("--index " + std::to_string(cfg.index) + " out of range (" + std::to_string(ds.size()) + " images)");
    return {ds.images[cfg.index], ds.labels[cfg.index]};
}

template <typename F>
void write_output(const fs::path& path, F&& writer) {
    std::ostringstream buf;
    writer(buf);
    std::ofstream out(path, std::ios::binary);
    out << buf.str();
    if (!out) throw Error("cannot write '" + path.string() + "'");
}

void check_common(const RunConfig& cfg) {
    parse_reference(cfg.reference);
    EstimatorConfig{cfg.epsilon}.validate();
}

std::vector<Method> parse_methods(const std::string& list) {
    std::vector<Method> methods;
    std::stringstream ss(list);
    std::string name;
    while (std::getline(ss, name, ',')) methods.push_back(parse_method(name));
    if (methods.empty()) throw Error("no methods given");
    return methods;
}

int cmd_predict(const RunConfig& cfg) {
    const Model model = load_model_file(cfg.model);
    const auto [image, label] = load_single(model, cfg);
    const Prediction p = predict(model, image);
    std::cout << "class " << p.label << '\n' << "probabilities";
    for (float v : p.probabilities.data()) std::cout << ' ' << format_g6(v);
    std::cout << '\n';
    if (label) std::cout << "label " << *label << '\n';
    return 0;
}

int cmd_attribute(const RunConfig& cfg) {
    check_common(cfg);
    const Method method = parse_method(cfg.method);
    const Model model = load_model_file(cfg.model);
    const auto [image, label] = load_single(model, cfg);
    std::size_t cls = 0;
    if (cfg.cls >= 0) {
        cls = static_cast<std::size_t>(cfg.cls);
    } else if (label) {
        cls = *label;
    } else {
        cls = predict(model, image).label;
    }
    auto ctx = AttributionContext::make(model, parse_reference(cfg.reference), EstimatorConfig{cfg.epsilon}, cfg.seed);
    ctx.ig_steps = cfg.ig_steps;
    const SaliencyMap map = attribute(ctx, method, image, cls, cfg.index);
    const PixelRanking ranking = rank_pixels(map);

    fs::create_directories(cfg.out);
    write_pgm_file(fs::path(cfg.out) / "saliency.pgm", quantize(map.normalized));
    write_output(fs::path(cfg.out) / "ranking.csv", [&](std::ostream& out) {
        out << "rank,row,col,score\n";
        for (std::size_t r = 0; r < ranking.order.size(); ++r) {
            const std::size_t p = ranking.order[r];
            char score[32];
            std::snprintf(score, sizeof score, "%.9g", map.normalized[p]);
            out << r << ',' << p / ranking.width << ',' << p % ranking.width << ',' << score << '\n';
        }
    });

    const ActivationTrace trace = forward_with_trace(model, image);
    double total = 0.0;
    for (float v : map.raw.data()) total += v;
    const double delta =
        static_cast<double>(trace.logits()[cls]) - static_cast<double>(ctx.reference_trace.logits()[cls]);
    std::cout << "completeness method=" << to_string(method) << " class=" << cls << " sum=" << format_g6(total)
              << " delta=" << format_g6(delta) << " ratio=" << format_g6(delta != 0.0 ? total / delta : 0.0) << '\n';
    return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
    check_common(cfg);
    const auto methods = parse_methods(cfg.method);
    EvalOptions options;
    options.pi_grid = parse_pi_grid(cfg.pi_grid);
    options.threads = cfg.threads;
    const Model model = load_model_file(cfg.model);
    const Dataset ds = limited(load_mnist_idx_files(cfg.images, cfg.labels, model.normalization()), cfg.limit);
    auto ctx = AttributionContext::make(model, parse_reference(cfg.reference), EstimatorConfig{cfg.epsilon}, cfg.seed);
    ctx.ig_steps = cfg.ig_steps;
    log::info("evaluating " + std::to_string(methods.size()) + " methods on " + std::to_string(ds.size()) + " images");
    const auto results = evaluate_methods(model, ds, methods, ctx, options);

    fs::create_directories(cfg.out);
    write_output(fs::path(cfg.out) / "curves.csv", [&](std::ostream& out) { write_curves_csv(out, results); });
    write_output(fs::path(cfg.out) / "auc.csv", [&](std::ostream& out) { write_auc_csv(out, results); });
    write_auc_csv(std::cout, results);
    return 0;
}

int cmd_faithfulness(const RunConfig& cfg) {
    check_common(cfg);
    const Model model = load_model_file(cfg.model);
    if (cfg.train_images.empty() || cfg.train_labels.empty()) throw Error("--train-images and --train-labels are required");
    const Dataset train =
        limited(load_mnist_idx_files(cfg.train_images, cfg.train_labels, model.normalization()), cfg.train_limit);
    const Dataset val = limited(load_mnist_idx_files(cfg.images, cfg.labels, model.normalization()), cfg.limit);
    const auto ctx = AttributionContext::make(model, parse_reference(cfg.reference), EstimatorConfig{cfg.epsilon}, cfg.seed);
    PrototypeBank bank;
    const FaithfulnessReport report = faithfulness_accuracy(ctx, train, val, cfg.threads, &bank);

    fs::create_directories(cfg.out);
    write_output(fs::path(cfg.out) / "prototypes.csv", [&](std::ostream& out) { write_prototypes_csv(out, bank); });
    write_output(fs::path(cfg.out) / "faithfulness.csv", [&](std::ostream& out) { write_report_csv(out, report); });
    write_report_csv(std::cout, report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"A-FMI attribution engine"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto add_model = [&](CLI::App* sub) { sub->add_option("--model", cfg.model, "AFW1 model container")->required(); };
    auto add_single = [&](CLI::App* sub) {
        sub->add_option("--image", cfg.image, "PGM (P5) input image");
        sub->add_option("--images", cfg.images, "IDX images file");
        sub->add_option("--labels", cfg.labels, "IDX labels file");
        sub->add_option("--index", cfg.index, "item index in the IDX files");
    };
    auto add_dataset = [&](CLI::App* sub) {
        sub->add_option("--images", cfg.images, "IDX images file")->required();
        sub->add_option("--labels", cfg.labels, "IDX labels file")->required();
        sub->add_option("--limit", cfg.limit, "use only the first N images (0 = all)");
    };
    auto add_attr = [&](CLI::App* sub) {
        sub->add_option("--reference", cfg.reference, "black | white | random:<seed>");
        sub->add_option("--epsilon", cfg.epsilon, "estimator fallback threshold");
        sub->add_option("--seed", cfg.seed, "seed for the random method");
        sub->add_option("--ig-steps", cfg.ig_steps, "integrated gradients path steps");
        sub->add_option("--out", cfg.out, "output directory");
    };

    auto* predict_cmd = app.add_subcommand("predict", "print class and probabilities");
    add_model(predict_cmd);
    add_single(predict_cmd);

    auto* attribute_cmd = app.add_subcommand("attribute", "write a saliency PGM and pixel ranking");
    add_model(attribute_cmd);
    add_single(attribute_cmd);
    add_attr(attribute_cmd);
    attribute_cmd->add_option("--method", cfg.method, "afmi | gradcam | gradient | ig | random");
    attribute_cmd->add_option("--class", cfg.cls, "target class (default: label, else prediction)");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "insertion curves and AUCs");
    add_model(evaluate_cmd);
    add_dataset(evaluate_cmd);
    add_attr(evaluate_cmd);
    std::string eval_methods = "random,gradient,gradcam,afmi";
    evaluate_cmd->add_option("--method", eval_methods, "comma-separated methods");
    evaluate_cmd->add_option("--pi-grid", cfg.pi_grid, "lo:hi:step");
    evaluate_cmd->add_option("--threads", cfg.threads, "worker threads");

    auto* faith_cmd = app.add_subcommand("faithfulness", "FMI-prototype classification accuracy");
    add_model(faith_cmd);
    add_dataset(faith_cmd);
    add_attr(faith_cmd);
    faith_cmd->add_option("--train-images", cfg.train_images, "IDX training images")->required();
    faith_cmd->add_option("--train-labels", cfg.train_labels, "IDX training labels")->required();
    faith_cmd->add_option("--train-limit", cfg.train_limit, "use only the first N training images (0 = all)");
    faith_cmd->add_option("--threads", cfg.threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*predict_cmd) return cmd_predict(cfg);
        if (*attribute_cmd) return cmd_attribute(cfg);
        if (*evaluate_cmd) {
            cfg.method = eval_methods;
            return cmd_evaluate(cfg);
        }
        if (*faith_cmd) return cmd_faithfulness(cfg);
    } catch (const std::exception& e) {
        log::error(e.what());
        return 1;
    }
    return 1;
}
