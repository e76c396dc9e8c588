// SPDX-License-Identifier: Apache-2.0
#include "afmi/faithfulness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "afmi/error.hpp"
#include "afmi/insertion.hpp"
#include "afmi/log.hpp"
#include "afmi/parallel.hpp"

namespace afmi {
namespace {

bool all_zero(const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

}  // namespace

std::vector<FmiVector> extract_fmi(const AttributionContext& ctx, const Dataset& dataset, std::size_t threads) {
    const Model& model = *ctx.model;
    std::vector<FmiVector> out(dataset.size());
    parallel_for(dataset.size(), threads, [&](std::size_t i) {
        out[i] = fmi(model, forward_with_trace(model, dataset.images[i]), ctx.reference_trace, dataset.labels[i],
                     ctx.estimator);
        out[i].reference = ctx.reference;
    });
    return out;
}

PrototypeBank build_prototypes(const std::vector<FmiVector>& vectors, std::size_t num_classes) {
    if (vectors.empty()) throw Error("no FMI vectors to build prototypes from");
    const std::size_t dims = vectors.front().scores.size();
    std::vector<std::vector<double>> sums(num_classes, std::vector<double>(dims, 0.0));
    PrototypeBank bank;
    bank.counts.assign(num_classes, 0);
    for (const auto& v : vectors) {
        if (v.cls >= num_classes) throw Error("FMI class " + std::to_string(v.cls) + " out of range");
        if (v.scores.size() != dims) throw ShapeError("FMI vectors differ in length");
        if (all_zero(v.scores)) {
            ++bank.zero_vectors;
            continue;
        }
        for (std::size_t k = 0; k < dims; ++k) sums[v.cls][k] += v.scores[k];
        ++bank.counts[v.cls];
    }
    if (bank.zero_vectors > 0)
        log::warn(std::to_string(bank.zero_vectors) + " all-zero FMI vectors left out of the prototypes");
    bank.prototypes.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (bank.counts[c] == 0) throw Error("class " + std::to_string(c) + " has no training image for its prototype");
        bank.prototypes[c].resize(dims);
        for (std::size_t k = 0; k < dims; ++k)
            bank.prototypes[c][k] = static_cast<float>(sums[c][k] / static_cast<double>(bank.counts[c]));
    }
    return bank;
}

PrototypeBank build_prototypes(const AttributionContext& ctx, const Dataset& train, std::size_t threads) {
    return build_prototypes(extract_fmi(ctx, train, threads), ctx.model->num_classes());
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine similarity of vectors with different lengths");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return -std::numeric_limits<double>::infinity();
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t classify_by_fmi(const std::vector<float>& fmi, const PrototypeBank& bank) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        const double sim = cosine_similarity(fmi, bank.prototypes[c]);
        if (sim > best_sim) {
            best_sim = sim;
            best = c;
        }
    }
    return best;
}

std::size_t classify_by_fmi(const FmiVector& fmi, const PrototypeBank& bank) { return classify_by_fmi(fmi.scores, bank); }

FaithfulnessReport faithfulness_accuracy(const AttributionContext& ctx, const Dataset& train, const Dataset& val,
                                         std::size_t threads, PrototypeBank* bank_out) {
    const Model& model = *ctx.model;
    PrototypeBank bank = build_prototypes(ctx, train, threads);

    // 0 = not eligible, 1 = eligible and wrong, 2 = eligible and right
    std::vector<std::uint8_t> outcome(val.size(), 0);
    std::vector<std::uint8_t> zero(val.size(), 0);
    parallel_for(val.size(), threads, [&](std::size_t i) {
        const ActivationTrace trace = forward_with_trace(model, val.images[i]);
        const std::size_t label = val.labels[i];
        if (argmax(trace.logits().data()) != label) return;
        const auto v = fmi(model, trace, ctx.reference_trace, label, ctx.estimator);
        zero[i] = all_zero(v.scores);
        outcome[i] = classify_by_fmi(v, bank) == label ? 2 : 1;
    });

    FaithfulnessReport report;
    report.train_n = train.size();
    report.val_n = val.size();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < val.size(); ++i) {
        if (outcome[i] == 0) continue;
        ++report.eligible_n;
        hits += outcome[i] == 2;
        report.zero_vectors += zero[i];
    }
    if (report.eligible_n == 0) throw Error("no correctly classified validation images to score");
    if (report.zero_vectors > 0)
        log::warn(std::to_string(report.zero_vectors) + " validation images had an all-zero FMI vector");
    report.accuracy = static_cast<double>(hits) / static_cast<double>(report.eligible_n);
    report.zero_vectors += bank.zero_vectors;
    if (bank_out) *bank_out = std::move(bank);
    return report;
}

void write_prototypes_csv(std::ostream& out, const PrototypeBank& bank) {
    out << "class,k,value\n";
    for (std::size_t c = 0; c < bank.num_classes(); ++c)
        for (std::size_t k = 0; k < bank.dims(); ++k) {
            char value[32];
            std::snprintf(value, sizeof value, "%.9g", bank.prototypes[c][k]);
            out << c << ',' << k << ',' << value << '\n';
        }
}

PrototypeBank read_prototypes_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "class,k,value")
        throw FormatError(FormatErrc::invalid_spec, "prototype CSV must start with 'class,k,value'");
    std::map<std::size_t, std::map<std::size_t, float>> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::size_t c = 0, k = 0;
        float v = 0.0f;
        char comma1 = 0, comma2 = 0;
        if (!(row >> c >> comma1 >> k >> comma2 >> v) || comma1 != ',' || comma2 != ',')
            throw FormatError(FormatErrc::invalid_spec, "bad prototype row '" + line + "'");
        cells[c][k] = v;
    }
    PrototypeBank bank;
    for (const auto& [c, row] : cells) {
        if (c != bank.prototypes.size()) throw FormatError(FormatErrc::invalid_spec, "prototype classes are not dense");
        std::vector<float> proto;
        for (const auto& [k, v] : row) {
            if (k != proto.size()) throw FormatError(FormatErrc::invalid_spec, "prototype entries are not dense");
            proto.push_back(v);
        }
        if (!bank.prototypes.empty() && proto.size() != bank.dims())
            throw FormatError(FormatErrc::shape_mismatch, "prototypes differ in length");
        bank.prototypes.push_back(std::move(proto));
    }
    bank.counts.assign(bank.prototypes.size(), 0);
    return bank;
}

void write_report_csv(std::ostream& out, const FaithfulnessReport& report) {
    out << "train_n,val_n,eligible_n,accuracy\n"
        << report.train_n << ',' << report.val_n << ',' << report.eligible_n << ',' << format_g6(report.accuracy) << '\n';
}

}  // namespace afmi
