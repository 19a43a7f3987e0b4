#pragma once

#include "layernr/tensor.hpp"

#include <vector>

namespace lnr {

// ---- elementwise arithmetic (equal shapes, or either side a size-1 scalar) ----
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, Scalar s);
Tensor operator+(Scalar s, const Tensor& a);
Tensor operator-(const Tensor& a, Scalar s);
Tensor operator-(Scalar s, const Tensor& a);
Tensor operator*(const Tensor& a, Scalar s);
Tensor operator*(Scalar s, const Tensor& a);
Tensor operator/(const Tensor& a, Scalar s);

// mat viewed as [R,C] with C = row.size(); leading dims are flattened into R.
Tensor add_rowwise(const Tensor& mat, const Tensor& row);
// col.size() = R; multiplies every row of mat by the matching col entry.
Tensor mul_colwise(const Tensor& mat, const Tensor& col);

Tensor texp(const Tensor& x);
Tensor tlog(const Tensor& x);
Tensor tsqrt(const Tensor& x);
Tensor tsin(const Tensor& x);
Tensor tcos(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor relu(const Tensor& x);

// Rodrigues coefficients as functions of t = angle^2: a(t) = sin(s)/s,
// b(t) = (1-cos(s))/s^2 with s = sqrt(t). Series below t = 1e-12 keeps the
// t -> 0 limit finite for both value and derivative.
Tensor rot_coef_a(const Tensor& t);
Tensor rot_coef_b(const Tensor& t);

// ---- shape ----
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor transpose2d(const Tensor& x);
Tensor slice(const Tensor& x, int axis, int start, int len);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor stack(const std::vector<Tensor>& xs, int axis);  // inserts a new axis
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

// ---- reductions ----
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);
Tensor mean_axis(const Tensor& x, int axis);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
// a: [P,m,k]; b: [P,k,n], or [P,n,k] when trans_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b = false);

Tensor softmax(const Tensor& x, int axis);

// x: [...,3] -> [..., 6l+3]: identity followed by sin/cos pairs at
// frequencies 2^0 pi .. 2^(l-1) pi.
Tensor posenc(const Tensor& x, int l);

// ---- segmented ops; offsets has R+1 entries, offsets[0]=0, offsets[R]=N ----
Tensor segment_sum(const Tensor& x, const std::vector<int>& offsets);
Tensor segment_excl_cumsum(const Tensor& x, const std::vector<int>& offsets);

// ---- convolution (single item, no batch axis) ----
// x: [Cin,H,W]; w: [Cout,Cin,kh,kw]; bias: [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad);
// Learned upsampling with kernel == stride (non-overlapping).
// x: [Cin,H,W]; w: [Cin,Cout,k,k]; output [Cout,H*k,W*k].
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int k);
// x: [Cin,D,H,W]; w: [Cout,Cin,k,k,k].
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad);

// ---- sampling / scatter (coordinates are constants, not differentiated) ----
// plane: [C,H,W]; uv: P x 2 pixel coordinates; clamp-to-edge.
Tensor bilinear_sample(const Tensor& plane, const Eigen::MatrixXd& uv);
// vol: [C,Dx,Dy,Dz]; pts: M x 3 in voxel-center coordinates (center of cell i
// at coordinate i). Support fades to zero outside the grid.
Tensor trilinear_query(const Tensor& vol, const Eigen::MatrixXd& pts);
// feats: [N,C]; idx: flat voxel index per row; returns [C] + vol_dims with
// per-voxel count averaging.
Tensor scatter_avg(const Tensor& feats, const std::vector<long>& idx,
                   const Shape& vol_dims);

}  // namespace lnr
