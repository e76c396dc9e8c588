// SPDX-License-Identifier: Apache-2.0
#include "afmi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "afmi/error.hpp"

namespace afmi {

const char* to_string(FormatErrc code) noexcept {
    switch (code) {
        case FormatErrc::bad_magic: return "bad magic";
        case FormatErrc::version_mismatch: return "version mismatch";
        case FormatErrc::truncated: return "truncated payload";
        case FormatErrc::shape_mismatch: return "shape mismatch";
        case FormatErrc::missing_last_conv: return "missing last-conv tag";
        case FormatErrc::invalid_spec: return "invalid model spec";
        case FormatErrc::count_mismatch: return "count mismatch";
    }
    return "format error";
}

std::size_t shape_size(const Shape& shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

static void check_dims(const Shape& shape) {
    if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](auto d) { return d == 0; }))
        throw ShapeError("tensor dimensions must be >= 1, got " + shape_string(shape));
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims(shape_);
    if (data_.size() != shape_size(shape_))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
}

Tensor Tensor::from(std::initializer_list<std::size_t> shape, std::initializer_list<float> values) {
    return Tensor(Shape(shape), std::vector<float>(values));
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace afmi
