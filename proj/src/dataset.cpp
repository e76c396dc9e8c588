// SPDX-License-Identifier: Apache-2.0
#include "afmi/dataset.hpp"

#include <algorithm>

#include "afmi/error.hpp"

namespace afmi {
namespace {

constexpr std::uint32_t images_magic = 0x00000803;
constexpr std::uint32_t labels_magic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at, const char* what) {
    if (bytes.size() < at + 4) throw FormatError(FormatErrc::truncated, std::string(what) + " header is truncated");
    return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
           (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
    Dataset out;
    const std::size_t begin = std::min(first, size());
    const std::size_t end = std::min(size(), begin + count);
    out.images.assign(images.begin() + static_cast<std::ptrdiff_t>(begin), images.begin() + static_cast<std::ptrdiff_t>(end));
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

Dataset load_mnist_idx(std::span<const std::uint8_t> images_bytes, std::span<const std::uint8_t> labels_bytes,
                       const Normalization& normalization) {
    const auto img_magic = read_be32(images_bytes, 0, "IDX images");
    if (img_magic != images_magic)
        throw FormatError(FormatErrc::bad_magic, "IDX images magic " + std::to_string(img_magic) + ", expected 2051");
    const auto lab_magic = read_be32(labels_bytes, 0, "IDX labels");
    if (lab_magic != labels_magic)
        throw FormatError(FormatErrc::bad_magic, "IDX labels magic " + std::to_string(lab_magic) + ", expected 2049");

    const std::size_t count = read_be32(images_bytes, 4, "IDX images");
    const std::size_t rows = read_be32(images_bytes, 8, "IDX images");
    const std::size_t cols = read_be32(images_bytes, 12, "IDX images");
    const std::size_t label_count = read_be32(labels_bytes, 4, "IDX labels");
    if (count != label_count)
        throw FormatError(FormatErrc::count_mismatch, std::to_string(count) + " images but " +
                                                          std::to_string(label_count) + " labels");
    const std::size_t pixels = rows * cols;
    if (pixels == 0) throw FormatError(FormatErrc::invalid_spec, "IDX images have zero size");
    if (images_bytes.size() < 16 + count * pixels)
        throw FormatError(FormatErrc::truncated, "IDX image data is truncated");
    if (labels_bytes.size() < 8 + count) throw FormatError(FormatErrc::truncated, "IDX label data is truncated");

    Dataset ds;
    ds.images.reserve(count);
    ds.labels.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        Tensor img({1, rows, cols});
        const std::uint8_t* src = images_bytes.data() + 16 + n * pixels;
        for (std::size_t i = 0; i < pixels; ++i)
            img[i] = normalization.apply(static_cast<float>(src[i]) / 255.0f, 0);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(labels_bytes[8 + n]);
    }
    return ds;
}

Dataset load_mnist_idx_files(const std::filesystem::path& images, const std::filesystem::path& labels,
                             const Normalization& normalization) {
    return load_mnist_idx(read_file(images), read_file(labels), normalization);
}

std::vector<std::uint8_t> encode_idx_images(std::span<const std::uint8_t> pixels, std::size_t count,
                                            std::size_t rows, std::size_t cols) {
    if (pixels.size() != count * rows * cols) throw ShapeError("IDX encode: pixel buffer size mismatch");
    std::vector<std::uint8_t> out;
    put_be32(out, images_magic);
    put_be32(out, static_cast<std::uint32_t>(count));
    put_be32(out, static_cast<std::uint32_t>(rows));
    put_be32(out, static_cast<std::uint32_t>(cols));
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    put_be32(out, labels_magic);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

}  // namespace afmi
