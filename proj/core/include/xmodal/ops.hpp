#pragma once

#include <utility>
#include <vector>

#include "xmodal/tensor.hpp"

// Differentiable primitives. Every op computes its forward value eagerly in
// f64 and records an exact backward closure on the result node when any
// input requires a gradient.

namespace xmodal {

// Elementwise; shapes must match, except that `b` may be a scalar for
// add/sub/mul/div (broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// k * x + c, elementwise.
Tensor affine(const Tensor& x, double k, double c);
Tensor scalar_mul(const Tensor& x, double k);
Tensor add_scalar(const Tensor& x, double c);

Tensor relu(const Tensor& x);
// Same function as relu under a separate name; kept as its own primitive so
// clamp semantics stay explicit at call sites.
Tensor clamp_min0(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);

// [R,K] x [K,C] -> [R,C]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);  // 2-D only

// [R,C] + [C] broadcast over rows.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
// [C,H,W] + [C] broadcast over the spatial extent.
Tensor add_chanvec(const Tensor& x, const Tensor& v);

// Reductions over a 2-D tensor; axis 0 collapses rows, axis 1 columns.
Tensor sum_axis(const Tensor& x, int axis);
Tensor max_axis(const Tensor& x, int axis);  // ties send gradient to the lowest index
Tensor sum_all(const Tensor& x);

// Concatenation along the last axis; all inputs must agree on leading dims.
Tensor concat_last(const std::vector<Tensor>& parts);
// Concatenation along axis 0 (channel concat for [C,H,W] maps).
Tensor concat_axis0(const std::vector<Tensor>& parts);
// Columns [start, start+len) of a 2-D tensor, or the same span of a 1-D one.
Tensor slice_last(const Tensor& x, int64_t start, int64_t len);

// Rows rescaled to unit L2 norm; errors on a row with norm <= 1e-12.
Tensor l2_normalize_rows(const Tensor& x);

// Row gather from a 2-D tensor; gradient scatter-adds back.
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx);
// Arbitrary-element gather by flat index into a 1-D result.
Tensor gather_elems(const Tensor& x, const std::vector<int64_t>& flat_idx);
// out[u] = sum_k w[u*K+k] * x[idx[u*K+k]]; weights are constants.
Tensor weighted_gather_rows(const Tensor& x, const std::vector<int64_t>& idx,
                            const std::vector<double>& w, int64_t k_per_row);
// [G*K, F] -> [G, F], max over each contiguous group of K rows.
Tensor rowgroup_max(const Tensor& x, int64_t k);

// input [Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int64_t stride, int64_t padding);
// Transposed convolution, kernel 2 stride 2: [Cin,H,W] -> [Cout,2H,2W],
// weight [Cin,Cout,2,2].
Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Per-channel normalization over the spatial extent of a [C,H,W] map with
// learned scale/shift, deterministic at any batch size.
Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Gather pixel feature columns from a [D,H,W] map into [N,D]; out-of-bounds
// pixels error. Gradient scatter-adds into the map.
Tensor gather_pixels(const Tensor& map, const std::vector<std::pair<int64_t, int64_t>>& pixels);

}  // namespace xmodal
