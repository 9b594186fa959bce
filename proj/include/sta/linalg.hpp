// SPDX-License-Identifier: Apache-2.0
#pragma once
#include "sta/tensor.hpp"

namespace sta {

// Plain dense kernels on 2-D / 3-D tensors. These are the single source of
// truth for forward arithmetic: the autodiff tape and the streaming model both
// call into them, so taped and untaped paths agree bitwise.

// C[m x n] = A[m x k] * B[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// C[m x n] = A[m x k] * B[n x k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// C[k x n] = A[m x k]^T * B[m x n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// y += s * x
void axpy(Tensor& y, double s, const Tensor& x);

// X[m x k] * W[k x n] + b[n] broadcast over rows; bias may be null.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias);

// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& m);

// Per-row normalization to zero mean / unit variance (eps inside the sqrt),
// then elementwise gamma scale and beta shift. gamma/beta are [n].
Tensor layer_norm(const Tensor& m, const Tensor& gamma, const Tensor& beta, double eps);

// Exact Gaussian error linear unit, applied elementwise.
Tensor gelu(const Tensor& x);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

// Non-overlapping PxP patches of an [H x W x C] image, row-major over the
// (H/P)x(W/P) grid; each patch flattened row-major over (row, col, channel).
// Result is [L x (C*P*P)].
Tensor image_to_patches(const Tensor& img, int patch);

// Corner-aligned bilinear interpolation of [h x w x C] to [H x W x C].
Tensor bilinear_upsample(const Tensor& src, int out_h, int out_w);

// Softmax / argmax over the channel dimension of [H x W x C].
Tensor softmax_channels(const Tensor& logits);
// Argmax over channels; ties resolved toward the smallest channel index.
Tensor argmax_channels(const Tensor& probs);

} // namespace sta
