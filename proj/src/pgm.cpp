// SPDX-License-Identifier: Apache-2.0
#include "afmi/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "afmi/error.hpp"

namespace afmi {
namespace {

std::size_t read_header_int(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    std::size_t v = 0;
    if (!(in >> v)) throw FormatError(FormatErrc::invalid_spec, "PGM header is malformed");
    return v;
}

}  // namespace

GrayImage quantize(const Tensor& map01) {
    if (map01.rank() != 2) throw ShapeError("quantize expects an [H,W] map, got " + shape_string(map01.shape()));
    GrayImage img{map01.dim(1), map01.dim(0), std::vector<std::uint8_t>(map01.size())};
    std::transform(map01.data().begin(), map01.data().end(), img.pixels.begin(), [](float v) {
        const double q = std::floor(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.999);
        return static_cast<std::uint8_t>(q);
    });
    return img;
}

void write_pgm(std::ostream& out, const GrayImage& image) {
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

void write_pgm_file(const std::filesystem::path& path, const GrayImage& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    write_pgm(out, image);
    if (!out) throw Error("failed writing '" + path.string() + "'");
}

GrayImage read_pgm(std::istream& in) {
    char magic[2] = {};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw FormatError(FormatErrc::bad_magic, "not a binary PGM (P5)");
    GrayImage img;
    img.width = read_header_int(in);
    img.height = read_header_int(in);
    const std::size_t maxval = read_header_int(in);
    if (maxval != 255) throw FormatError(FormatErrc::invalid_spec, "PGM maxval must be 255");
    if (img.width == 0 || img.height == 0) throw FormatError(FormatErrc::invalid_spec, "PGM has zero size");
    in.get();  // single whitespace before raster
    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
        throw FormatError(FormatErrc::truncated, "PGM raster is truncated");
    return img;
}

GrayImage read_pgm_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return read_pgm(in);
}

}  // namespace afmi
