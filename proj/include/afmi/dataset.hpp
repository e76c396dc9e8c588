// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "afmi/model.hpp"
#include "afmi/tensor.hpp"

namespace afmi {

/// Normalized [1,H,W] images with their class labels.
struct Dataset {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }
    /// First `count` items starting at `first`, clamped to the dataset.
    Dataset slice(std::size_t first, std::size_t count) const;
};

/// MNIST IDX pair: images magic 0x00000803, labels 0x00000801, big-endian
/// headers. Pixels are scaled by 1/255 and then normalized.
Dataset load_mnist_idx(std::span<const std::uint8_t> images_bytes, std::span<const std::uint8_t> labels_bytes,
                       const Normalization& normalization);
Dataset load_mnist_idx_files(const std::filesystem::path& images, const std::filesystem::path& labels,
                             const Normalization& normalization);

/// Encodes raw bytes as an IDX pair (used by fixtures and tests).
std::vector<std::uint8_t> encode_idx_images(std::span<const std::uint8_t> pixels, std::size_t count,
                                            std::size_t rows, std::size_t cols);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

}  // namespace afmi
