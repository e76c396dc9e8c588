// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "afmi/error.hpp"
#include "afmi/faithfulness.hpp"
#include "support/oracle.hpp"

using namespace afmi;

namespace {

FmiVector vec(std::vector<float> scores, std::size_t cls) { return {std::move(scores), cls, {}}; }

PrototypeBank bank_of(std::vector<std::vector<float>> protos) {
    PrototypeBank b;
    b.counts.assign(protos.size(), 1);
    b.prototypes = std::move(protos);
    return b;
}

Model tiny_cnn(test::Rng& rng) {
    test::ModelBuilder b;
    b.rng = &rng;
    b.spec.input_shape = {1, 6, 6};
    b.spec.num_classes = 3;
    b.conv(4, 1, 3, {}, true);
    b.relu();
    b.flatten();
    b.linear(8, 64);
    b.relu();
    b.linear(3, 8);
    return b.build();
}

// one image per class, labelled with the model's own prediction
Dataset one_per_class(test::Rng& rng, const Model& m) {
    Dataset ds;
    std::vector<bool> seen(m.num_classes(), false);
    for (int tries = 0; tries < 10000 && ds.size() < m.num_classes(); ++tries) {
        const Tensor x = rng.tensor(m.input_shape(), -3, 3);
        const std::size_t c = predict(m, x).label;
        if (seen[c]) continue;
        seen[c] = true;
        ds.images.push_back(x);
        ds.labels.push_back(c);
    }
    return ds;
}

}  // namespace

TEST_SUITE("faithfulness") {

TEST_CASE("prototypes are per-class means") {
    const PrototypeBank single = build_prototypes({vec({1, 2}, 0), vec({3, -1}, 1)}, 2);
    CHECK(single.prototypes[0] == std::vector<float>{1, 2});
    CHECK(single.prototypes[1] == std::vector<float>{3, -1});
    CHECK(single.counts == std::vector<std::size_t>{1, 1});

    const PrototypeBank dup = build_prototypes({vec({1, 2}, 0), vec({1, 2}, 0), vec({3, -1}, 1)}, 2);
    CHECK(dup.prototypes == single.prototypes);
    CHECK(dup.counts == std::vector<std::size_t>{2, 1});

    const PrototypeBank mean = build_prototypes({vec({1, 0}, 0), vec({0, 1}, 1), vec({3, 2}, 0)}, 2);
    CHECK(mean.prototypes[0] == std::vector<float>{2, 1});

    const PrototypeBank shuffled = build_prototypes({vec({3, 2}, 0), vec({0, 1}, 1), vec({1, 0}, 0)}, 2);
    CHECK(shuffled.prototypes == mean.prototypes);
}

TEST_CASE("zero vectors are left out and counted") {
    const PrototypeBank b = build_prototypes({vec({0, 0}, 0), vec({2, 2}, 0), vec({1, 1}, 1)}, 2);
    CHECK(b.prototypes[0] == std::vector<float>{2, 2});
    CHECK(b.counts[0] == 1);
    CHECK(b.zero_vectors == 1);
    CHECK_THROWS_AS(build_prototypes({vec({0, 0}, 0), vec({1, 1}, 1)}, 2), Error);
    CHECK_THROWS_AS(build_prototypes({vec({1, 1}, 0)}, 2), Error);
}

TEST_CASE("cosine similarity") {
    CHECK(cosine_similarity({1, 0}, {0, 1}) == 0.0);
    CHECK(cosine_similarity({1, 2}, {2, 4}) == doctest::Approx(1.0));
    CHECK(cosine_similarity({1, 2}, {-1, -2}) == doctest::Approx(-1.0));
    CHECK(cosine_similarity({0, 0}, {1, 1}) == -std::numeric_limits<double>::infinity());
    CHECK(cosine_similarity({1, 1}, {0, 0}) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("classify_by_fmi") {
    const PrototypeBank b = bank_of({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0.2f, 0.1f, 0.4f, 0.9f}});
    CHECK(classify_by_fmi(b.prototypes[3], b) == 3);
    CHECK(classify_by_fmi(std::vector<float>{0.6f, 0.3f, 1.2f, 2.7f}, b) == 3);
    CHECK(classify_by_fmi(std::vector<float>{0, 5, 0, 0}, b) == 1);
    CHECK(classify_by_fmi(std::vector<float>{0, 0, 0, 0}, b) == 0);
    const PrototypeBank tied = bank_of({{1, 1}, {1, 1}, {2, 2}});
    CHECK(classify_by_fmi(std::vector<float>{3, 3}, tied) == 0);

    test::Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> f(4);
        for (auto& v : f) v = static_cast<float>(rng.uniform(-1, 1));
        auto scaled = f;
        const float lambda = static_cast<float>(rng.uniform(0.1, 10));
        for (auto& v : scaled) v *= lambda;
        CHECK(classify_by_fmi(f, b) == classify_by_fmi(scaled, b));
    }
}

TEST_CASE("validation set equal to training set scores 1.0") {
    test::Rng rng(15);
    const Model m = tiny_cnn(rng);
    const Dataset ds = one_per_class(rng, m);
    REQUIRE(ds.size() == m.num_classes());
    const auto ctx = AttributionContext::make(m, {});
    PrototypeBank bank;
    const FaithfulnessReport r = faithfulness_accuracy(ctx, ds, ds, 1, &bank);
    CHECK(r.accuracy == 1.0);
    CHECK(r.eligible_n == ds.size());
    CHECK(bank.num_classes() == 3);
    CHECK(bank.dims() == 4);
    const auto fmis = extract_fmi(ctx, ds);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(bank.prototypes[ds.labels[i]] == fmis[i].scores);
}

TEST_CASE("no eligible validation image is an error") {
    test::Rng rng(16);
    const Model m = tiny_cnn(rng);
    const Dataset train = one_per_class(rng, m);
    Dataset wrong = train;
    for (auto& l : wrong.labels) l = (l + 1) % m.num_classes();
    const auto ctx = AttributionContext::make(m, {});
    CHECK_THROWS_AS(faithfulness_accuracy(ctx, train, wrong), Error);
    CHECK_THROWS_AS(faithfulness_accuracy(ctx, train, Dataset{}), Error);
}

TEST_CASE("prototype extraction is thread-count independent") {
    test::Rng rng(17);
    const Model m = tiny_cnn(rng);
    Dataset ds;
    for (int i = 0; i < 40; ++i) {
        ds.images.push_back(rng.tensor(m.input_shape(), -3, 3));
        ds.labels.push_back(static_cast<std::size_t>(i % 3));
    }
    const auto ctx = AttributionContext::make(m, {});
    const PrototypeBank a = build_prototypes(ctx, ds, 1), b = build_prototypes(ctx, ds, 4);
    CHECK(a.prototypes == b.prototypes);
    CHECK(a.counts == b.counts);
}

TEST_CASE("CSV round trip") {
    const PrototypeBank b = bank_of({{0.125f, -3.5f}, {1e-7f, 2.0f / 3.0f}});
    std::stringstream ss;
    write_prototypes_csv(ss, b);
    std::string header;
    std::getline(std::istringstream(ss.str()) >> std::ws, header);
    CHECK(header == "class,k,value");
    const PrototypeBank back = read_prototypes_csv(ss);
    CHECK(back.prototypes == b.prototypes);

    std::ostringstream report;
    write_report_csv(report, {2000, 1000, 975, 0.5, 0});
    CHECK(report.str() == "train_n,val_n,eligible_n,accuracy\n2000,1000,975,0.5\n");
    std::istringstream bad("class,k,value\n0,0,abc\n");
    CHECK_THROWS_AS(read_prototypes_csv(bad), Error);
}

TEST_CASE("committed model: prototype bank shape and fixture classification") {
    const Model m = load_model_file(test::data_path("models/mnist_cnn.afw1"));
    const Dataset train = load_mnist_idx_files(test::data_path("mnist/train-2000-images-idx3-ubyte"),
                                               test::data_path("mnist/train-2000-labels-idx1-ubyte"), m.normalization());
    const Dataset val = load_mnist_idx_files(test::data_path("mnist/val-1000-images-idx3-ubyte"),
                                             test::data_path("mnist/val-1000-labels-idx1-ubyte"), m.normalization());
    const auto ctx = AttributionContext::make(m, {});
    const PrototypeBank bank = build_prototypes(ctx, train.slice(0, 500));
    CHECK(bank.num_classes() == 10);
    CHECK(bank.dims() == 64);
    const auto f = fmi(m, forward_with_trace(m, val.images[0]), ctx.reference_trace, val.labels[0]);
    CHECK(classify_by_fmi(f, bank) == val.labels[0]);
}

TEST_CASE("random-weight model sits near chance" * doctest::may_fail()) {
    test::Rng rng(1);
    test::ModelBuilder b;
    b.rng = &rng;
    b.spec.input_shape = {1, 28, 28};
    b.spec.num_classes = 10;
    b.spec.normalization = {{0.1307f}, {0.3081f}};
    b.conv(32, 1, 3);
    b.relu();
    b.conv(64, 32, 3, {}, true);
    b.relu();
    b.maxpool(2, 2);
    b.flatten();
    b.linear(128, 9216);
    b.relu();
    b.linear(10, 128);
    const Model m = b.build();
    const Dataset train = load_mnist_idx_files(test::data_path("mnist/train-2000-images-idx3-ubyte"),
                                               test::data_path("mnist/train-2000-labels-idx1-ubyte"), m.normalization());
    const Dataset val = load_mnist_idx_files(test::data_path("mnist/val-1000-images-idx3-ubyte"),
                                             test::data_path("mnist/val-1000-labels-idx1-ubyte"), m.normalization());
    const FaithfulnessReport r = faithfulness_accuracy(AttributionContext::make(m, {}), train, val);
    MESSAGE("random-weight model: eligible " << r.eligible_n << ", accuracy " << r.accuracy);
    CHECK(r.accuracy < 0.3);
}

}
