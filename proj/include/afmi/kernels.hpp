// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single-image forward and input-gradient kernels. All functions are pure; the
// float64 accumulation inside conv/linear goes through afmi::simd.

#include <cstddef>
#include <vector>

#include "afmi/tensor.hpp"

namespace afmi {

struct ConvParams {
    std::size_t stride_h = 1;
    std::size_t stride_w = 1;
    std::size_t pad_h = 0;
    std::size_t pad_w = 0;
    friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

/// Spatial output size of a conv/pool window; throws ShapeError if < 1.
std::size_t window_output(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

Shape conv2d_output_shape(const Shape& input, const Shape& weight, const ConvParams& params);

/// input [C_in,H,W], weight [C_out,C_in,kh,kw], bias [C_out]
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvParams& params);

/// Adjoint of conv2d_forward with respect to the input.
Tensor conv2d_backward_data(const Tensor& grad_out, const Tensor& weight, const ConvParams& params,
                            const Shape& input_shape);

/// Flat input index of the max chosen for each output element.
using PoolIndex = std::vector<std::size_t>;

struct PoolResult {
    Tensor output;
    PoolIndex index;
};

Shape maxpool_output_shape(const Shape& input, std::size_t kernel, std::size_t stride);

/// Ties go to the lowest flat index.
PoolResult maxpool_forward(const Tensor& input, std::size_t kernel, std::size_t stride);
Tensor maxpool_backward(const Tensor& grad_out, const PoolIndex& index, const Shape& input_shape);

Tensor relu(const Tensor& input);
/// grad_out * 1[pre_activation > 0]; the derivative at exactly 0 is 0.
Tensor relu_backward(const Tensor& grad_out, const Tensor& pre_activation);

/// x [d_in] (any shape with d_in elements), W [d_out,d_in], b [d_out] -> [d_out]
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// W^T grad_out, shape [d_in]
Tensor linear_backward_data(const Tensor& grad_out, const Tensor& weight);

/// [C,H,W] -> [C]
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape);

/// Subtract-max stabilized softmax over a flat logit vector.
Tensor softmax(const Tensor& logits);

}  // namespace afmi
