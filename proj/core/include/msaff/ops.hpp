#pragma once

#include <vector>

#include "msaff/tensor.hpp"

namespace msaff {

// Convolution. `bias` may be an undefined Tensor to skip the bias term.
// conv2d: input [B,Cin,H,W] x weight [Cout,Cin,kh,kw] -> [B,Cout,H',W'],
// H' = (H + 2*padding - kh)/stride + 1 (cross-correlation semantics).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);
// conv1d: input [B,Cin,L] x weight [Cout,Cin,k] -> [B,Cout,L'], stride 1,
// L' = L + 2*padding - k + 1.
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int padding);
// Same-length conv1d; requires an odd kernel, pads k/2.
Tensor conv1d_same(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]
Tensor transpose(const Tensor& x);                // 2-D
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax(const Tensor& x, int axis);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope = 0.01);
Tensor relu(const Tensor& x);
Tensor sqrt(const Tensor& x);

Tensor max_pool2d(const Tensor& x, int kernel, int stride);

Tensor reduce_mean(const Tensor& x, int axis, bool keepdim = false);
Tensor reduce_max(const Tensor& x, int axis, bool keepdim = false);
Tensor reduce_sum(const Tensor& x, int axis, bool keepdim = false);
Tensor sum(const Tensor& x);  // full reduction to a size-1 tensor

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int length);

// Elementwise binary ops with numpy-style broadcasting (trailing alignment,
// size-1 axes stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

}  // namespace msaff
