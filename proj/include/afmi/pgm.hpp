// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "afmi/tensor.hpp"

namespace afmi {

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, maxval 255
};

/// floor(v * 255.999) of a [0,1] map, clamped.
GrayImage quantize(const Tensor& map01);

void write_pgm(std::ostream& out, const GrayImage& image);
void write_pgm_file(const std::filesystem::path& path, const GrayImage& image);
/// Binary P5 with maxval 255; comments allowed in the header.
GrayImage read_pgm(std::istream& in);
GrayImage read_pgm_file(const std::filesystem::path& path);

}  // namespace afmi
