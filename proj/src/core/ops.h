#pragma once

#include <vector>

#include "core/tensor.h"

namespace tritex {

// ---- elementwise (numpy-style broadcasting) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_const(const Tensor& a, double c);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor sqrt_(const Tensor& a);
Tensor tanh_(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor square(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape s);          // aliases storage
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor broadcast_to(const Tensor& a, const Shape& s);
Tensor slice_axis0(const Tensor& a, int64_t start, int64_t len);

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& a, int axis, bool keepdim = false);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);   // [m,k]x[k,n]
Tensor bmm(const Tensor& a, const Tensor& b);      // [B,m,k]x[B,k,n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x[m,k] w[k,n] (+b[n])

// ---- neural-net ops ----
Tensor softmax_lastdim(const Tensor& a);
Tensor layernorm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5);
Tensor groupnorm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-5);  // x [C,H,W]
Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& b);  // pad 1, stride 1
Tensor conv2d_1x1(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor avgpool2x2(const Tensor& x);
Tensor upsample_nearest(const Tensor& x, int64_t out_h, int64_t out_w);

// ---- sequences ----
Tensor cumsum_exclusive_lastdim(const Tensor& a);

// ---- compositions ----
Tensor mse(const Tensor& a, const Tensor& b);

// ---- scatter/gather specialty ops ----

// Image assembly from per-pixel rows: out[H,W,C] = background everywhere,
// out[pix[m]] = values[m]. Pixel ids must be unique.
Tensor scatter_rows_to_image(const Tensor& values, const std::vector<int64_t>& pix,
                             int64_t h, int64_t w, const std::vector<double>& background);

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& rows);

}  // namespace tritex
