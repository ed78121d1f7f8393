#pragma once

#include <vector>

#include "gs/tensor.hpp"

namespace gs {

// Elementwise binary ops with numpy-style trailing broadcast. Both operands
// must have the same rank or the shorter shape is aligned to the trailing
// dims; each dim pair must match or one side must be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Elementwise unary ops.
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// x * scale + shift with compile-time constants.
Tensor affine(const Tensor& x, double scale_c, double shift_c);
inline Tensor scale(const Tensor& x, double c) { return affine(x, c, 0.0); }
inline Tensor addc(const Tensor& x, double c) { return affine(x, 1.0, c); }
inline Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// rank-2 transpose
Tensor transpose(const Tensor& x);

// x [Cin,H,W], w [Cout,Cin,3,3], bias [Cout], stride 1 or 2, zero padding 1.
// Output [Cout, ceil(H/stride), ceil(W/stride)].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride);

Tensor softmax(const Tensor& x, int64_t axis);

// Normalizes over the last axis; gain/bias have that axis's extent.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// f [C,H,W], pts [P,2] as (x,y) in pixel units with pixel centers at integer
// coordinates -> [P,C]. Corner weights are max(0, 1-|dx|)*max(0, 1-|dy|);
// corners outside [0,W-1]x[0,H-1] contribute zero, so points more than one
// pixel outside the image yield zero rows. Differentiable in f and pts.
Tensor bilinear_sample(const Tensor& f, const Tensor& pts);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// rank-2 only
Tensor sum_axis(const Tensor& x, int64_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, int64_t axis, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
// rank-2, columns [c0, c1)
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
// axis 0 for equal trailing shapes, axis 1 for rank-2
Tensor concat(const Tensor& a, const Tensor& b, int64_t axis);
Tensor concat_rows(const std::vector<Tensor>& xs);
// out[i, ...] = x[idx[i], ...]; idx entries may repeat
Tensor gather_rows(const Tensor& x, std::vector<int64_t> idx);
// constant copy, never recorded
Tensor detach(const Tensor& x);

// Thread count used by the compute kernels. Results are bitwise identical
// for every setting; this only controls wall-clock.
void set_num_threads(int n);
int num_threads();

void assert_finite(const Tensor& x, const char* what);

}  // namespace gs
