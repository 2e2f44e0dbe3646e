#pragma once

#include <cstdint>
#include <vector>

#include "racam/tensor.hpp"

namespace racam {

// Forward kernels. Inputs are float32; every spatial/channel reduction
// accumulates in double in a fixed order (ascending channel, kernel row,
// kernel column, row-major positions) and rounds once at the end, so
// results are bit-reproducible.

/// Cross-correlation (no kernel flip), zero padding.
/// input [C_in,H,W], weight [C_out,C_in,kH,kW], bias [C_out].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

struct Conv2dGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& grad_out, const Tensor& input,
                            const Tensor& weight, int stride, int pad);

/// x > 0 ? x : slope * x, elementwise. slope in [0,1).
Tensor leaky_relu(const Tensor& input, float slope);

struct MaxPoolResult {
    Tensor output;
    /// Flat input index of each window's maximum (first occurrence in
    /// row-major order on ties).
    std::vector<std::int32_t> argmax;
};
MaxPoolResult maxpool2d(const Tensor& input, int k, int stride);
Tensor maxpool2d_backward(const Tensor& grad_out, const Tensor& input,
                          const std::vector<std::int32_t>& argmax);

/// Per-channel spatial mean: [C,H,W] -> [C].
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& grad_out, const Tensor& input);

/// weight [M,N] * input [N] + bias [M].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
struct LinearGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};
LinearGrads linear_backward(const Tensor& grad_out, const Tensor& input, const Tensor& weight);

/// -log softmax(logits)[label], max-subtracted for stability.
float softmax_cross_entropy(const Tensor& logits, int label);
/// softmax(logits) - onehot(label).
Tensor softmax_cross_entropy_backward(const Tensor& logits, int label);

/// softmax(logits) as probabilities.
Tensor softmax(const Tensor& logits);

/// Per-pixel 2-class cross-entropy averaged over all pixels.
/// logits [K,H,W], target [1,H,W] with class indices stored as floats.
float pixel_cross_entropy(const Tensor& logits, const Tensor& target);
Tensor pixel_cross_entropy_backward(const Tensor& logits, const Tensor& target);

/// Align-corners bilinear interpolation; bitwise identity when the
/// output size equals the input size.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);
Tensor bilinear_resize_backward(const Tensor& grad_out, int in_h, int in_w);

}  // namespace racam
