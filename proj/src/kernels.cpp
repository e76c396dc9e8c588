// SPDX-License-Identifier: Apache-2.0
#include "afmi/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "afmi/error.hpp"
#include "afmi/simd/kernels.hpp"

namespace afmi {
namespace {

void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
}

void expect_shape(const Shape& got, const Shape& want, const char* what) {
    if (got != want)
        throw ShapeError(std::string(what) + ": expected " + shape_string(want) + ", got " + shape_string(got));
}

// Patch matrix [out_h*out_w][C_in*kh*kw], zero outside the padded input.
std::vector<float> im2col(const Tensor& input, std::size_t kh, std::size_t kw, const ConvParams& p,
                          std::size_t out_h, std::size_t out_w) {
    const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
    const std::size_t patch = channels * kh * kw;
    std::vector<float> cols(out_h * out_w * patch, 0.0f);
    const float* src = input.data().data();
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            float* dst = cols.data() + (oy * out_w + ox) * patch;
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * p.stride_h + ky) -
                                    static_cast<std::ptrdiff_t>(p.pad_h);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * p.stride_w + kx) -
                                        static_cast<std::ptrdiff_t>(p.pad_w);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                        dst[(c * kh + ky) * kw + kx] = src[(c * height + iy) * width + ix];
                    }
                }
            }
        }
    }
    return cols;
}

}  // namespace

std::size_t window_output(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ShapeError("stride must be positive");
    if (kernel == 0 || in + 2 * pad < kernel)
        throw ShapeError("window of size " + std::to_string(kernel) + " exceeds input extent " +
                         std::to_string(in) + " (padding " + std::to_string(pad) + ")");
    return (in + 2 * pad - kernel) / stride + 1;
}

Shape conv2d_output_shape(const Shape& input, const Shape& weight, const ConvParams& params) {
    if (input.size() != 3) throw ShapeError("conv2d: input must be [C,H,W], got " + shape_string(input));
    if (weight.size() != 4) throw ShapeError("conv2d: weight must be [C_out,C_in,kh,kw], got " + shape_string(weight));
    if (weight[1] != input[0])
        throw ShapeError("conv2d: weight expects " + std::to_string(weight[1]) + " input channels, input has " +
                         std::to_string(input[0]));
    return {weight[0], window_output(input[1], weight[2], params.stride_h, params.pad_h),
            window_output(input[2], weight[3], params.stride_w, params.pad_w)};
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvParams& params) {
    const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), params);
    expect_shape(bias.shape(), {weight.dim(0)}, "conv2d bias");
    const std::size_t out_ch = out_shape[0], out_h = out_shape[1], out_w = out_shape[2];
    const std::size_t patch = weight.dim(1) * weight.dim(2) * weight.dim(3);
    const std::size_t pixels = out_h * out_w;

    const auto cols = im2col(input, weight.dim(2), weight.dim(3), params, out_h, out_w);
    const auto& k = simd::active();
    Tensor out(out_shape);
    float* dst = out.data().data();
    const float* w = weight.data().data();

    std::size_t oc = 0;
    for (; oc + 4 <= out_ch; oc += 4) {
        double acc[4];
        for (std::size_t p = 0; p < pixels; ++p) {
            k.dot4(w + oc * patch, patch, cols.data() + p * patch, patch, acc);
            for (std::size_t r = 0; r < 4; ++r)
                dst[(oc + r) * pixels + p] = static_cast<float>(acc[r] + static_cast<double>(bias[oc + r]));
        }
    }
    for (; oc < out_ch; ++oc) {
        for (std::size_t p = 0; p < pixels; ++p)
            dst[oc * pixels + p] =
                static_cast<float>(k.dot(w + oc * patch, cols.data() + p * patch, patch) + static_cast<double>(bias[oc]));
    }
    return out;
}

Tensor conv2d_backward_data(const Tensor& grad_out, const Tensor& weight, const ConvParams& params,
                            const Shape& input_shape) {
    expect_shape(grad_out.shape(), conv2d_output_shape(input_shape, weight.shape(), params), "conv2d grad_out");
    const std::size_t out_ch = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    const std::size_t channels = input_shape[0], height = input_shape[1], width = input_shape[2];
    const std::size_t out_h = grad_out.dim(1), out_w = grad_out.dim(2);
    const std::size_t patch = channels * kh * kw;
    const std::size_t pixels = out_h * out_w;

    const auto& k = simd::active();
    const float* w = weight.data().data();
    const float* g = grad_out.data().data();
    std::vector<double> dpatch(patch);
    std::vector<double> acc(channels * height * width, 0.0);

    for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::size_t p = oy * out_w + ox;
            std::fill(dpatch.begin(), dpatch.end(), 0.0);
            bool any = false;
            for (std::size_t oc = 0; oc < out_ch; ++oc) {
                const float go = g[oc * pixels + p];
                if (go == 0.0f) continue;
                k.axpy(go, w + oc * patch, dpatch.data(), patch);
                any = true;
            }
            if (!any) continue;
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * params.stride_h + ky) -
                                    static_cast<std::ptrdiff_t>(params.pad_h);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * params.stride_w + kx) -
                                        static_cast<std::ptrdiff_t>(params.pad_w);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                        acc[(c * height + iy) * width + ix] += dpatch[(c * kh + ky) * kw + kx];
                    }
                }
            }
        }
    }
    Tensor grad_in(input_shape);
    std::transform(acc.begin(), acc.end(), grad_in.data().begin(), [](double v) { return static_cast<float>(v); });
    return grad_in;
}

Shape maxpool_output_shape(const Shape& input, std::size_t kernel, std::size_t stride) {
    if (input.size() != 3) throw ShapeError("maxpool: input must be [C,H,W], got " + shape_string(input));
    return {input[0], window_output(input[1], kernel, stride, 0), window_output(input[2], kernel, stride, 0)};
}

PoolResult maxpool_forward(const Tensor& input, std::size_t kernel, std::size_t stride) {
    const Shape out_shape = maxpool_output_shape(input.shape(), kernel, stride);
    const std::size_t channels = input.dim(0), height = input.dim(1), width = input.dim(2);
    const std::size_t out_h = out_shape[1], out_w = out_shape[2];
    PoolResult result{Tensor(out_shape), PoolIndex(shape_size(out_shape))};
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                std::size_t best = (c * height + oy * stride) * width + ox * stride;
                float best_v = input[best];
                // row-major scan with strict '>' keeps the lowest flat index on ties
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const std::size_t idx = (c * height + oy * stride + ky) * width + ox * stride + kx;
                        if (input[idx] > best_v) {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t o = (c * out_h + oy) * out_w + ox;
                result.output[o] = best_v;
                result.index[o] = best;
            }
        }
    }
    return result;
}

Tensor maxpool_backward(const Tensor& grad_out, const PoolIndex& index, const Shape& input_shape) {
    if (index.size() != grad_out.size())
        throw ShapeError("maxpool backward: index has " + std::to_string(index.size()) + " entries, grad_out " +
                         std::to_string(grad_out.size()));
    Tensor grad_in(input_shape);
    for (std::size_t o = 0; o < index.size(); ++o) {
        if (index[o] >= grad_in.size()) throw ShapeError("maxpool backward: index outside input");
        grad_in[index[o]] += grad_out[o];
    }
    return grad_in;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.data()) v = v > 0.0f ? v : 0.0f;
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& pre_activation) {
    expect_shape(grad_out.shape(), pre_activation.shape(), "relu backward");
    Tensor grad_in(grad_out.shape());
    for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] = pre_activation[i] > 0.0f ? grad_out[i] : 0.0f;
    return grad_in;
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    expect_rank(weight, 2, "linear weight");
    const std::size_t d_out = weight.dim(0), d_in = weight.dim(1);
    if (x.size() != d_in)
        throw ShapeError("linear: input has " + std::to_string(x.size()) + " elements, weight expects " +
                         std::to_string(d_in));
    expect_shape(bias.shape(), {d_out}, "linear bias");
    const auto& k = simd::active();
    const float* w = weight.data().data();
    Tensor y({d_out});
    std::size_t j = 0;
    for (; j + 4 <= d_out; j += 4) {
        double acc[4];
        k.dot4(w + j * d_in, d_in, x.data().data(), d_in, acc);
        for (std::size_t r = 0; r < 4; ++r) y[j + r] = static_cast<float>(acc[r] + static_cast<double>(bias[j + r]));
    }
    for (; j < d_out; ++j)
        y[j] = static_cast<float>(k.dot(w + j * d_in, x.data().data(), d_in) + static_cast<double>(bias[j]));
    return y;
}

Tensor linear_backward_data(const Tensor& grad_out, const Tensor& weight) {
    expect_rank(weight, 2, "linear weight");
    const std::size_t d_out = weight.dim(0), d_in = weight.dim(1);
    if (grad_out.size() != d_out)
        throw ShapeError("linear backward: grad_out has " + std::to_string(grad_out.size()) + " elements, expected " +
                         std::to_string(d_out));
    const auto& k = simd::active();
    std::vector<double> acc(d_in, 0.0);
    for (std::size_t j = 0; j < d_out; ++j) {
        if (grad_out[j] == 0.0f) continue;
        k.axpy(grad_out[j], weight.data().data() + j * d_in, acc.data(), d_in);
    }
    Tensor grad_in({d_in});
    std::transform(acc.begin(), acc.end(), grad_in.data().begin(), [](double v) { return static_cast<float>(v); });
    return grad_in;
}

Tensor global_avg_pool(const Tensor& input) {
    expect_rank(input, 3, "global_avg_pool");
    const std::size_t channels = input.dim(0), n = input.dim(1) * input.dim(2);
    Tensor out({channels});
    for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += input[c * n + i];
        out[c] = static_cast<float>(s / static_cast<double>(n));
    }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_out, const Shape& input_shape) {
    if (input_shape.size() != 3 || grad_out.size() != input_shape[0])
        throw ShapeError("global_avg_pool backward: grad " + shape_string(grad_out.shape()) + " vs input " +
                         shape_string(input_shape));
    const std::size_t n = input_shape[1] * input_shape[2];
    Tensor grad_in(input_shape);
    for (std::size_t c = 0; c < input_shape[0]; ++c) {
        const float v = static_cast<float>(static_cast<double>(grad_out[c]) / static_cast<double>(n));
        std::fill_n(grad_in.data().begin() + static_cast<std::ptrdiff_t>(c * n), n, v);
    }
    return grad_in;
}

Tensor softmax(const Tensor& logits) {
    const float peak = *std::max_element(logits.data().begin(), logits.data().end());
    std::vector<double> e(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        e[i] = std::exp(static_cast<double>(logits[i]) - static_cast<double>(peak));
        total += e[i];
    }
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = static_cast<float>(e[i] / total);
    return out;
}

}  // namespace afmi
