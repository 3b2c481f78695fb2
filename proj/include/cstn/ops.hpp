#pragma once

#include <vector>

#include "cstn/tensor.hpp"

namespace cstn {

enum class PadMode { Zero, Reflect };

// Elementwise. add/sub accept an operand whose shape is a trailing suffix of
// the other's and broadcast it over the leading dims; mul/div require equal
// shapes. Scalar overloads apply the scalar to every element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float s);
Tensor sub(const Tensor& a, float s);
Tensor mul(const Tensor& a, float s);
Tensor div(const Tensor& a, float s);
Tensor neg(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);

// GELU, tanh approximation:
//   0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 * x^3)))
Tensor gelu(const Tensor& a);

Tensor softmax(const Tensor& a, int axis);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

Tensor reshape(const Tensor& a, Shape to);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop);

// Cyclic shift of the H and W axes of an [N,H,W,C] tensor.
Tensor roll_hw(const Tensor& a, int64_t shift_h, int64_t shift_w);

// Bottom/right reflect padding of an [N,H,W,C] tensor (mirror without edge
// repeat); pad_h <= H-1, pad_w <= W-1.
Tensor pad_reflect_hw(const Tensor& a, int64_t pad_h, int64_t pad_w);

// Row gather: out[i,:] = table[idx[i],:]. Differentiable w.r.t. table.
Tensor index_select0(const Tensor& table, std::vector<int64_t> idx);

// Batched contraction over the last two axes; leading dims must match, or b
// may be unbatched rank-2. matmul_nt contracts against b transposed:
// [..,m,k] x [..,n,k] -> [..,m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// x[...,k] * w[n,k]^T + b[n]; pass an undefined Tensor for no bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Same-size convolution, stride 1, odd kernel, NCHW x [O,Ci,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              PadMode pad = PadMode::Zero);

// Normalization over the last axis (population variance), then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, float s) { return add(a, s); }
inline Tensor operator-(const Tensor& a, float s) { return sub(a, s); }
inline Tensor operator*(const Tensor& a, float s) { return mul(a, s); }
inline Tensor operator/(const Tensor& a, float s) { return div(a, s); }
inline Tensor operator*(float s, const Tensor& a) { return mul(a, s); }

}  // namespace cstn
