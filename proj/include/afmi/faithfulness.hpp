// SPDX-License-Identifier: Apache-2.0
#pragma once

// FMI vectors as image representations: per-class prototypes are mean FMI
// vectors over training images, and a validation image is classified by the
// cosine-nearest prototype. Agreement with the label measures faithfulness.

#include <iosfwd>
#include <vector>

#include "afmi/attribution.hpp"
#include "afmi/dataset.hpp"
#include "afmi/model.hpp"

namespace afmi {

struct PrototypeBank {
    std::vector<std::vector<float>> prototypes;  // [class][k]
    std::vector<std::size_t> counts;             // contributing images per class
    std::size_t zero_vectors = 0;                // all-zero FMI vectors left out of the means

    std::size_t num_classes() const noexcept { return prototypes.size(); }
    std::size_t dims() const noexcept { return prototypes.empty() ? 0 : prototypes.front().size(); }
};

/// FMI of every image for its ground-truth class, in dataset order.
std::vector<FmiVector> extract_fmi(const AttributionContext& ctx, const Dataset& dataset, std::size_t threads = 1);

/// Throws Error when a class has no contributing (non-zero) vector.
PrototypeBank build_prototypes(const std::vector<FmiVector>& vectors, std::size_t num_classes);
PrototypeBank build_prototypes(const AttributionContext& ctx, const Dataset& train, std::size_t threads = 1);

/// Cosine similarity; -inf when either vector is all zero.
double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

/// argmax_c cos(fmi, prototype_c), lowest class on ties.
std::size_t classify_by_fmi(const std::vector<float>& fmi, const PrototypeBank& bank);
std::size_t classify_by_fmi(const FmiVector& fmi, const PrototypeBank& bank);

struct FaithfulnessReport {
    std::size_t train_n = 0;
    std::size_t val_n = 0;
    std::size_t eligible_n = 0;  // validation images the model classifies correctly
    double accuracy = 0.0;
    std::size_t zero_vectors = 0;
};

/// Only model-correct validation images are scored; throws Error if there are none.
FaithfulnessReport faithfulness_accuracy(const AttributionContext& ctx, const Dataset& train, const Dataset& val,
                                         std::size_t threads = 1, PrototypeBank* bank_out = nullptr);

/// rows `class,k,value`, values as %.9g so floats round-trip
void write_prototypes_csv(std::ostream& out, const PrototypeBank& bank);
PrototypeBank read_prototypes_csv(std::istream& in);
/// `train_n,val_n,eligible_n,accuracy`
void write_report_csv(std::ostream& out, const FaithfulnessReport& report);

}  // namespace afmi
