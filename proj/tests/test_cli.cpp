// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "afmi/dataset.hpp"
#include "afmi/insertion.hpp"
#include "afmi/pgm.hpp"
#include "support/oracle.hpp"

using namespace afmi;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Scratch {
public:
    Scratch() : dir_(fs::temp_directory_path() / ("afmi_cli_" + std::to_string(::getpid()) + "_" + std::to_string(next_++))) {
        fs::create_directories(dir_);
    }
    ~Scratch() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }
    fs::path operator/(const std::string& name) const { return dir_ / name; }

    RunResult run(const std::string& args) const {
        const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd = std::string(AFMI_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
        const int raw = std::system(cmd.c_str());
        return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
    }

private:
    static inline int next_ = 0;
    fs::path dir_;
};

const std::string model = test::data_path("models/mnist_cnn.afw1");
const std::string val_images = test::data_path("mnist/val-1000-images-idx3-ubyte");
const std::string val_labels = test::data_path("mnist/val-1000-labels-idx1-ubyte");
const std::string train_images = test::data_path("mnist/train-2000-images-idx3-ubyte");
const std::string train_labels = test::data_path("mnist/train-2000-labels-idx1-ubyte");

std::string val_args() { return " --model " + model + " --images " + val_images + " --labels " + val_labels; }

// raw bytes of the first `per_class` validation images of each listed class the model gets right
void write_subset(const fs::path& stem, const std::vector<std::size_t>& classes) {
    const Model m = load_model_file(model);
    const auto img_bytes = read_file(val_images), lab_bytes = read_file(val_labels);
    const Dataset val = load_mnist_idx(img_bytes, lab_bytes, m.normalization());
    std::vector<std::uint8_t> pixels, labels;
    for (std::size_t c : classes)
        for (std::size_t i = 0; i < val.size(); ++i)
            if (val.labels[i] == c && predict(m, val.images[i]).label == c) {
                pixels.insert(pixels.end(), img_bytes.begin() + 16 + static_cast<long>(i * 784),
                              img_bytes.begin() + 16 + static_cast<long>((i + 1) * 784));
                labels.push_back(static_cast<std::uint8_t>(c));
                break;
            }
    const auto images = encode_idx_images(pixels, labels.size(), 28, 28);
    const auto encoded = encode_idx_labels(labels);
    std::ofstream(stem.string() + "-images", std::ios::binary)
        .write(reinterpret_cast<const char*>(images.data()), static_cast<long>(images.size()));
    std::ofstream(stem.string() + "-labels", std::ios::binary)
        .write(reinterpret_cast<const char*>(encoded.data()), static_cast<long>(encoded.size()));
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char ch : text) n += ch == '\n';
    return n;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("--help exits 0 with usage") {
    Scratch s;
    const auto r = s.run("--help");
    CHECK(r.status == 0);
    CHECK(r.out.find("predict") != std::string::npos);
    CHECK(r.out.find("faithfulness") != std::string::npos);
    CHECK(s.run("evaluate --help").status == 0);
}

TEST_CASE("predict reproduces the golden class") {
    Scratch s;
    const auto r = s.run("predict" + val_args() + " --index 0");
    REQUIRE(r.status == 0);
    CHECK(r.out.rfind("class 6\n", 0) == 0);
}

TEST_CASE("malformed container is rejected with a bad-magic message") {
    Scratch s;
    auto bytes = read_file(model);
    bytes[0] = 'X';
    std::ofstream(s / "bad.afw1", std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    const auto r = s.run("predict --model " + (s / "bad.afw1").string() + " --images " + val_images + " --labels " +
                         val_labels);
    CHECK(r.status != 0);
    CHECK(r.err.find("bad magic") != std::string::npos);
}

TEST_CASE("attribute on the reference image writes an all-zero PGM") {
    Scratch s;
    const Model m = load_model_file(model);
    // black in raw pixels is exactly the default reference
    write_pgm_file(s / "black.pgm", GrayImage{28, 28, std::vector<std::uint8_t>(784, 0)});
    const auto r = s.run("attribute --model " + model + " --image " + (s / "black.pgm").string() +
                         " --method afmi --class 3 --out " + (s / "out").string());
    REQUIRE(r.status == 0);
    const GrayImage g = read_pgm_file(s / "out" / "saliency.pgm");
    CHECK(g.width == 28);
    CHECK(g.height == 28);
    CHECK(g.pixels == std::vector<std::uint8_t>(784, 0));
    CHECK(r.out.find("completeness method=afmi class=3") != std::string::npos);
}

TEST_CASE("attribute outputs are byte-identical across runs") {
    Scratch s;
    for (const std::string method : {"afmi", "random", "gradcam"}) {
        const std::string base = "attribute" + val_args() + " --index 4 --seed 11 --method " + method + " --out ";
        REQUIRE(s.run(base + (s / "a").string()).status == 0);
        REQUIRE(s.run(base + (s / "b").string()).status == 0);
        CHECK(slurp(s / "a" / "saliency.pgm") == slurp(s / "b" / "saliency.pgm"));
        CHECK(slurp(s / "a" / "ranking.csv") == slurp(s / "b" / "ranking.csv"));
        const std::string ranking = slurp(s / "a" / "ranking.csv");
        CHECK(ranking.rfind("rank,row,col,score\n", 0) == 0);
        CHECK(count_lines(ranking) == 785);
        const GrayImage g = read_pgm_file(s / "a" / "saliency.pgm");
        CHECK(g.pixels.size() == 784);
    }
}

TEST_CASE("evaluate with grid 1.0 reports plain accuracy") {
    Scratch s;
    const auto r = s.run("evaluate" + val_args() + " --limit 30 --method afmi --pi-grid 1.0 --out " + (s / "o").string());
    REQUIRE(r.status == 0);
    const Model m = load_model_file(model);
    const Dataset ds = load_mnist_idx_files(val_images, val_labels, m.normalization()).slice(0, 30);
    const std::string curves = slurp(s / "o" / "curves.csv");
    CHECK(curves.find("afmi,accuracy,1," + format_g6(plain_accuracy(m, ds)) + "\n") != std::string::npos);
    CHECK(curves.find("afmi,softmax_ratio,1,1\n") != std::string::npos);
}

TEST_CASE("evaluate rejects unknown methods and references") {
    Scratch s;
    CHECK(s.run("evaluate" + val_args() + " --method lrp --out " + (s / "o").string()).status != 0);
    CHECK(s.run("evaluate" + val_args() + " --reference gray --out " + (s / "o").string()).status != 0);
    CHECK(s.run("evaluate" + val_args() + " --pi-grid 0:1:2 --out " + (s / "o").string()).status != 0);
    CHECK_FALSE(fs::exists(s / "o" / "auc.csv"));
}

TEST_CASE("four-method evaluation writes four AUC rows, deterministically") {
    Scratch s;
    const std::string base = "evaluate" + val_args() + " --limit 8 --pi-grid 0.1:1:0.3 --seed 3 --out ";
    REQUIRE(s.run(base + (s / "a").string()).status == 0);
    REQUIRE(s.run(base + (s / "b").string() + " --threads 3").status == 0);
    const std::string auc = slurp(s / "a" / "auc.csv");
    CHECK(count_lines(auc) == 5);
    CHECK(auc.rfind("method,accuracy_auc,softmax_auc\nrandom,", 0) == 0);
    CHECK(auc == slurp(s / "b" / "auc.csv"));
    CHECK(slurp(s / "a" / "curves.csv") == slurp(s / "b" / "curves.csv"));
}

TEST_CASE("faithfulness: train equals val with one image per class") {
    Scratch s;
    write_subset(s / "one", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const std::string one = (s / "one").string();
    const auto r = s.run("faithfulness --model " + model + " --train-images " + one + "-images --train-labels " + one +
                         "-labels --images " + one + "-images --labels " + one + "-labels --out " + (s / "o").string());
    REQUIRE(r.status == 0);
    CHECK(slurp(s / "o" / "faithfulness.csv") == "train_n,val_n,eligible_n,accuracy\n10,10,10,1\n");
    CHECK(count_lines(slurp(s / "o" / "prototypes.csv")) == 1 + 10 * 64);
}

TEST_CASE("faithfulness: a class missing from training is an error") {
    Scratch s;
    write_subset(s / "nine", {0, 1, 2, 3, 4, 5, 6, 7, 8});
    const std::string nine = (s / "nine").string();
    const auto r = s.run("faithfulness --model " + model + " --train-images " + nine + "-images --train-labels " + nine +
                         "-labels" + " --images " + val_images + " --labels " + val_labels + " --limit 20 --out " +
                         (s / "o").string());
    CHECK(r.status != 0);
    CHECK_FALSE(fs::exists(s / "o" / "faithfulness.csv"));
}

TEST_CASE("missing inputs fail cleanly") {
    Scratch s;
    CHECK(s.run("predict --model " + model).status != 0);
    CHECK(s.run("predict --model /nonexistent/model.afw1 --image x.pgm").status != 0);
    CHECK(s.run("predict" + val_args() + " --index 5000").status != 0);
    CHECK(s.run("").status != 0);
}

}
