#pragma once

#include <array>
#include <utility>
#include <vector>

#include "tp3m/tensor.hpp"

namespace tp3m {

// Elementwise (same shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// Scalar broadcasts.
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// s - a, elementwise
Tensor rsub_scalar(double s, const Tensor& a);
// a * s where s is a 1-element tensor (gradient flows into s too)
Tensor mul_scalar_t(const Tensor& a, const Tensor& s);
Tensor div_scalar_t(const Tensor& a, const Tensor& s);

// Activations / pointwise.
Tensor tanh_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_t(const Tensor& a);
// log(1 + exp(a)), overflow-safe
Tensor softplus(const Tensor& a);
// sqrt with a zero-safe backward (subgradient 0 at 0)
Tensor sqrt_t(const Tensor& a);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// 2-D linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);
// x[n,d] + b[d] broadcast over rows
Tensor bias_rows(const Tensor& x, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Shape.
Tensor reshape(const Tensor& a, std::vector<int> new_shape);
// {C,H,W} -> {H*W, C} token matrix
Tensor tokens_from_chw(const Tensor& a);
// {N,C} -> {C,H,W}, N == H*W
Tensor chw_from_tokens(const Tensor& a, int h, int w);

// softmax along axis (0 = down columns, 1 = along rows) of a 2-D tensor;
// max-subtraction stabilized, rows/cols sum to 1 within 1e-12.
Tensor softmax(const Tensor& a, int axis);

// Scaled dot-product attention: rows of the output are convex combinations
// of rows of v. Optionally reports the row-stochastic weight matrix.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::vector<double>* weights_out = nullptr);

// Cross-correlation conv. input {Cin,H,W}, kernel {Cout,Cin,kh,kw}, odd
// spatial dims; output {Cout, (H+2p-kh)/s+1, (W+2p-kw)/s+1}.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias,
              int stride, int padding);
// Depthwise: kernel {C,kh,kw}, one filter per channel.
Tensor conv2d_depthwise(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                        int stride, int padding);

// Nearest-neighbour upsample of {C,H,W} by an integer factor.
Tensor upsample_nearest(const Tensor& input, int factor);

// Pick entries (i,j) out of a 2-D tensor; output is a flat vector.
Tensor gather_cells(const Tensor& m, const std::vector<std::pair<int, int>>& cells);

// Rows rescaled to unit L2 norm (descriptor normalization before similarity).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// Subtract the per-column mean over rows: removes the component shared by
// all tokens so cosine similarity measures relative variation.
Tensor center_tokens(const Tensor& x);

}  // namespace tp3m
