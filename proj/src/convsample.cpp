#include "layernr/ops.hpp"

#include <cmath>

namespace lnr {

namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void accum(const NodePtr& n, const Array& g) {
    if (!n->requires_grad) return;
    n->ensure_grad();
    n->grad += g;
}

int conv_out(int n, int k, int stride, int pad) {
    int num = n + 2 * pad - k;
    if (num < 0) fail_shape("conv: kernel larger than padded input");
    return num / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad) {
    if (x.ndim() != 3 || w.ndim() != 4) fail_shape("conv2d: bad ranks");
    int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) fail_shape("conv2d: channel mismatch");
    int ho = conv_out(h, kh, stride, pad), wo = conv_out(wd, kw, stride, pad);
    long cols = (long)ho * wo, rows = (long)cin * kh * kw;

    RowMat col(rows, cols);
    const Scalar* xd = x.values().data();
    for (int c = 0; c < cin; ++c)
        for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx) {
                long r = ((long)c * kh + dy) * kw + dx;
                for (int oy = 0; oy < ho; ++oy) {
                    int iy = oy * stride + dy - pad;
                    for (int ox = 0; ox < wo; ++ox) {
                        int ix = ox * stride + dx - pad;
                        col(r, (long)oy * wo + ox) =
                            (iy >= 0 && iy < h && ix >= 0 && ix < wd)
                                ? xd[((long)c * h + iy) * wd + ix]
                                : 0.0;
                    }
                }
            }

    Array out(cout * cols);
    MapMat O(out.data(), cout, cols);
    O = CMapMat(w.values().data(), cout, rows) * col;
    bool has_bias = bias.defined();
    if (has_bias) {
        if (bias.size() != cout) fail_shape("conv2d: bias size mismatch");
        for (int c = 0; c < cout; ++c) O.row(c).array() += bias.values()[c];
    }

    auto xn = x.node(), wn = w.node();
    NodePtr bn = has_bias ? bias.node() : nullptr;
    Array wv = w.values();
    std::vector<Tensor> parents{x, w};
    if (has_bias) parents.push_back(bias);
    auto colp = std::make_shared<RowMat>(std::move(col));
    return make_op({cout, ho, wo}, out, parents,
                   [xn, wn, bn, wv, colp, cin, h, wd, cout, kh, kw, stride, pad, ho,
                    wo, rows, cols](Node& self) {
        CMapMat G(self.grad.data(), cout, cols);
        if (wn->requires_grad) {
            Array gw(cout * rows);
            MapMat(gw.data(), cout, rows) = G * colp->transpose();
            accum(wn, gw);
        }
        if (bn && bn->requires_grad) {
            Array gb(cout);
            for (int c = 0; c < cout; ++c) gb[c] = G.row(c).sum();
            accum(bn, gb);
        }
        if (xn->requires_grad) {
            RowMat gcol = CMapMat(wv.data(), cout, rows).transpose() * G;
            xn->ensure_grad();
            Scalar* gx = xn->grad.data();
            for (int c = 0; c < cin; ++c)
                for (int dy = 0; dy < kh; ++dy)
                    for (int dx = 0; dx < kw; ++dx) {
                        long r = ((long)c * kh + dy) * kw + dx;
                        for (int oy = 0; oy < ho; ++oy) {
                            int iy = oy * stride + dy - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int ox = 0; ox < wo; ++ox) {
                                int ix = ox * stride + dx - pad;
                                if (ix < 0 || ix >= wd) continue;
                                gx[((long)c * h + iy) * wd + ix] +=
                                    gcol(r, (long)oy * wo + ox);
                            }
                        }
                    }
        }
    });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int k) {
    if (x.ndim() != 3 || w.ndim() != 4) fail_shape("conv_transpose2d: bad ranks");
    int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    if (w.dim(0) != cin || w.dim(2) != k || w.dim(3) != k)
        fail_shape("conv_transpose2d: weight shape mismatch");
    int cout = w.dim(1);
    int ho = h * k, wo = wd * k;
    long cols = (long)h * wd;
    // M[(co,dy,dx), (y,x)] = sum_ci w[ci,co,dy,dx] * x[ci,y,x]
    RowMat wmat(cout * k * k, cin);
    const Scalar* wdat = w.values().data();
    for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    wmat(((long)co * k + dy) * k + dx, ci) =
                        wdat[(((long)ci * cout + co) * k + dy) * k + dx];
    RowMat M = wmat * CMapMat(x.values().data(), cin, cols);
    Array out(cout * (long)ho * wo);
    Scalar* od = out.data();
    bool has_bias = bias.defined();
    for (int co = 0; co < cout; ++co) {
        Scalar b = has_bias ? bias.values()[co] : 0.0;
        for (int y = 0; y < h; ++y)
            for (int x2 = 0; x2 < wd; ++x2)
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        od[((long)co * ho + y * k + dy) * wo + x2 * k + dx] =
                            M(((long)co * k + dy) * k + dx, (long)y * wd + x2) + b;
    }
    auto xn = x.node(), wn = w.node();
    NodePtr bn = has_bias ? bias.node() : nullptr;
    Array xv = x.values();
    std::vector<Tensor> parents{x, w};
    if (has_bias) parents.push_back(bias);
    auto wmatp = std::make_shared<RowMat>(std::move(wmat));
    return make_op({cout, ho, wo}, out, parents,
                   [xn, wn, bn, xv, wmatp, cin, cout, h, wd, k, ho, wo, cols](Node& self) {
        // regroup output grad into the (co,dy,dx) x (y,x) layout
        RowMat GM(cout * k * k, cols);
        const Scalar* gd = self.grad.data();
        for (int co = 0; co < cout; ++co)
            for (int y = 0; y < h; ++y)
                for (int x2 = 0; x2 < wd; ++x2)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            GM(((long)co * k + dy) * k + dx, (long)y * wd + x2) =
                                gd[((long)co * ho + y * k + dy) * wo + x2 * k + dx];
        if (xn->requires_grad) {
            Array gx(cin * cols);
            MapMat(gx.data(), cin, cols) = wmatp->transpose() * GM;
            accum(xn, gx);
        }
        if (wn->requires_grad) {
            RowMat gwmat = GM * CMapMat(xv.data(), cin, cols).transpose();
            Array gw = Array::Zero(cin * cout * k * k);
            for (int ci = 0; ci < cin; ++ci)
                for (int co = 0; co < cout; ++co)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            gw[(((long)ci * cout + co) * k + dy) * k + dx] =
                                gwmat(((long)co * k + dy) * k + dx, ci);
            accum(wn, gw);
        }
        if (bn && bn->requires_grad) {
            Array gb(cout);
            for (int co = 0; co < cout; ++co)
                gb[co] = Eigen::Map<const Array>(gd + (long)co * ho * wo,
                                                 (long)ho * wo).sum();
            accum(bn, gb);
        }
    });
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad) {
    if (x.ndim() != 4 || w.ndim() != 5) fail_shape("conv3d: bad ranks");
    int cin = x.dim(0), d = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin || w.dim(3) != k || w.dim(4) != k)
        fail_shape("conv3d: weight shape mismatch");
    int do_ = conv_out(d, k, stride, pad), ho = conv_out(h, k, stride, pad),
        wo = conv_out(wd, k, stride, pad);
    long cols = (long)do_ * ho * wo, rows = (long)cin * k * k * k;

    RowMat col(rows, cols);
    const Scalar* xd = x.values().data();
    for (int c = 0; c < cin; ++c)
        for (int dz = 0; dz < k; ++dz)
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    long r = (((long)c * k + dz) * k + dy) * k + dx;
                    long cc = 0;
                    for (int oz = 0; oz < do_; ++oz) {
                        int iz = oz * stride + dz - pad;
                        bool zok = iz >= 0 && iz < d;
                        for (int oy = 0; oy < ho; ++oy) {
                            int iy = oy * stride + dy - pad;
                            bool yok = iy >= 0 && iy < h;
                            for (int ox = 0; ox < wo; ++ox, ++cc) {
                                int ix = ox * stride + dx - pad;
                                col(r, cc) = (zok && yok && ix >= 0 && ix < wd)
                                                 ? xd[(((long)c * d + iz) * h + iy) * wd + ix]
                                                 : 0.0;
                            }
                        }
                    }
                }

    Array out(cout * cols);
    MapMat O(out.data(), cout, cols);
    O = CMapMat(w.values().data(), cout, rows) * col;
    bool has_bias = bias.defined();
    if (has_bias) {
        if (bias.size() != cout) fail_shape("conv3d: bias size mismatch");
        for (int c = 0; c < cout; ++c) O.row(c).array() += bias.values()[c];
    }

    auto xn = x.node(), wn = w.node();
    NodePtr bn = has_bias ? bias.node() : nullptr;
    Array wv = w.values();
    std::vector<Tensor> parents{x, w};
    if (has_bias) parents.push_back(bias);
    auto colp = std::make_shared<RowMat>(std::move(col));
    return make_op({cout, do_, ho, wo}, out, parents,
                   [xn, wn, bn, wv, colp, cin, d, h, wd, cout, k, stride, pad, do_, ho,
                    wo, rows, cols](Node& self) {
        CMapMat G(self.grad.data(), cout, cols);
        if (wn->requires_grad) {
            Array gw(cout * rows);
            MapMat(gw.data(), cout, rows) = G * colp->transpose();
            accum(wn, gw);
        }
        if (bn && bn->requires_grad) {
            Array gb(cout);
            for (int c = 0; c < cout; ++c) gb[c] = G.row(c).sum();
            accum(bn, gb);
        }
        if (xn->requires_grad) {
            RowMat gcol = CMapMat(wv.data(), cout, rows).transpose() * G;
            xn->ensure_grad();
            Scalar* gx = xn->grad.data();
            for (int c = 0; c < cin; ++c)
                for (int dz = 0; dz < k; ++dz)
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx) {
                            long r = (((long)c * k + dz) * k + dy) * k + dx;
                            long cc = 0;
                            for (int oz = 0; oz < do_; ++oz) {
                                int iz = oz * stride + dz - pad;
                                bool zok = iz >= 0 && iz < d;
                                for (int oy = 0; oy < ho; ++oy) {
                                    int iy = oy * stride + dy - pad;
                                    bool yok = iy >= 0 && iy < h;
                                    for (int ox = 0; ox < wo; ++ox, ++cc) {
                                        int ix = ox * stride + dx - pad;
                                        if (zok && yok && ix >= 0 && ix < wd)
                                            gx[(((long)c * d + iz) * h + iy) * wd + ix] +=
                                                gcol(r, cc);
                                    }
                                }
                            }
                        }
        }
    });
}

Tensor bilinear_sample(const Tensor& plane, const Eigen::MatrixXd& uv) {
    if (plane.ndim() != 3) fail_shape("bilinear_sample: expected [C,H,W]");
    int c = plane.dim(0), h = plane.dim(1), w = plane.dim(2);
    long p = uv.rows();
    // precompute the 4 corner indices and weights per point
    std::vector<long> i00(p), i01(p), i10(p), i11(p);
    std::vector<Scalar> w00(p), w01(p), w10(p), w11(p);
    for (long i = 0; i < p; ++i) {
        Scalar u = std::clamp(uv(i, 0), 0.0, (Scalar)(w - 1));
        Scalar v = std::clamp(uv(i, 1), 0.0, (Scalar)(h - 1));
        int x0 = std::min((int)std::floor(u), w - 1);
        int y0 = std::min((int)std::floor(v), h - 1);
        int x1 = std::min(x0 + 1, w - 1);
        int y1 = std::min(y0 + 1, h - 1);
        Scalar fx = u - x0, fy = v - y0;
        i00[i] = (long)y0 * w + x0;
        i01[i] = (long)y0 * w + x1;
        i10[i] = (long)y1 * w + x0;
        i11[i] = (long)y1 * w + x1;
        w00[i] = (1 - fx) * (1 - fy);
        w01[i] = fx * (1 - fy);
        w10[i] = (1 - fx) * fy;
        w11[i] = fx * fy;
    }
    Array out(p * c);
    const Scalar* pd = plane.values().data();
    long hw = (long)h * w;
    for (long i = 0; i < p; ++i)
        for (int ch = 0; ch < c; ++ch)
            out[i * c + ch] = w00[i] * pd[ch * hw + i00[i]] +
                              w01[i] * pd[ch * hw + i01[i]] +
                              w10[i] * pd[ch * hw + i10[i]] +
                              w11[i] * pd[ch * hw + i11[i]];
    auto pn = plane.node();
    return make_op({(int)p, c}, out, {plane},
                   [pn, i00, i01, i10, i11, w00, w01, w10, w11, c, hw](Node& self) {
        if (!pn->requires_grad) return;
        pn->ensure_grad();
        Scalar* g = pn->grad.data();
        long p2 = (long)i00.size();
        for (long i = 0; i < p2; ++i)
            for (int ch = 0; ch < c; ++ch) {
                Scalar go = self.grad[i * c + ch];
                g[ch * hw + i00[i]] += w00[i] * go;
                g[ch * hw + i01[i]] += w01[i] * go;
                g[ch * hw + i10[i]] += w10[i] * go;
                g[ch * hw + i11[i]] += w11[i] * go;
            }
    });
}

Tensor trilinear_query(const Tensor& vol, const Eigen::MatrixXd& pts) {
    if (vol.ndim() != 4) fail_shape("trilinear_query: expected [C,Dx,Dy,Dz]");
    int c = vol.dim(0), dx = vol.dim(1), dy = vol.dim(2), dz = vol.dim(3);
    long m = pts.rows();
    long nvox = (long)dx * dy * dz;
    // up to 8 (index, weight) pairs per point; out-of-range corners dropped
    std::vector<std::array<long, 8>> idx(m);
    std::vector<std::array<Scalar, 8>> wgt(m);
    std::vector<int> cnt(m, 0);
    for (long i = 0; i < m; ++i) {
        Scalar px = pts(i, 0), py = pts(i, 1), pz = pts(i, 2);
        int x0 = (int)std::floor(px), y0 = (int)std::floor(py), z0 = (int)std::floor(pz);
        Scalar fx = px - x0, fy = py - y0, fz = pz - z0;
        for (int corner = 0; corner < 8; ++corner) {
            int cx = x0 + (corner & 1), cy = y0 + ((corner >> 1) & 1),
                cz = z0 + (corner >> 2);
            if (cx < 0 || cx >= dx || cy < 0 || cy >= dy || cz < 0 || cz >= dz)
                continue;
            Scalar wx = (corner & 1) ? fx : 1 - fx;
            Scalar wy = ((corner >> 1) & 1) ? fy : 1 - fy;
            Scalar wz = (corner >> 2) ? fz : 1 - fz;
            Scalar w = wx * wy * wz;
            if (w == 0.0) continue;
            idx[i][cnt[i]] = ((long)cx * dy + cy) * dz + cz;
            wgt[i][cnt[i]] = w;
            ++cnt[i];
        }
    }
    Array out = Array::Zero(m * c);
    const Scalar* vd = vol.values().data();
    for (long i = 0; i < m; ++i)
        for (int j = 0; j < cnt[i]; ++j) {
            Scalar w = wgt[i][j];
            long base = idx[i][j];
            for (int ch = 0; ch < c; ++ch)
                out[i * c + ch] += w * vd[ch * nvox + base];
        }
    auto vn = vol.node();
    return make_op({(int)m, c}, out, {vol}, [vn, idx, wgt, cnt, c, nvox](Node& self) {
        if (!vn->requires_grad) return;
        vn->ensure_grad();
        Scalar* g = vn->grad.data();
        for (long i = 0; i < (long)idx.size(); ++i)
            for (int j = 0; j < cnt[i]; ++j) {
                Scalar w = wgt[i][j];
                long base = idx[i][j];
                for (int ch = 0; ch < c; ++ch)
                    g[ch * nvox + base] += w * self.grad[i * c + ch];
            }
    });
}

Tensor scatter_avg(const Tensor& feats, const std::vector<long>& idx,
                   const Shape& vol_dims) {
    if (feats.ndim() != 2) fail_shape("scatter_avg: expected [N,C]");
    long n = feats.dim(0);
    int c = feats.dim(1);
    if ((long)idx.size() != n) fail_shape("scatter_avg: index count mismatch");
    long nvox = shape_size(vol_dims);
    std::vector<Scalar> count(nvox, 0.0);
    for (long i = 0; i < n; ++i) {
        if (idx[i] < 0 || idx[i] >= nvox) fail_shape("scatter_avg: index out of range");
        count[idx[i]] += 1.0;
    }
    Array out = Array::Zero((long)c * nvox);
    const Scalar* fd = feats.values().data();
    for (long i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch)
            out[ch * nvox + idx[i]] += fd[i * c + ch];
    for (long v = 0; v < nvox; ++v)
        if (count[v] > 0)
            for (int ch = 0; ch < c; ++ch) out[ch * nvox + v] /= count[v];
    Shape out_shape{c};
    for (int d : vol_dims) out_shape.push_back(d);
    auto fn = feats.node();
    return make_op(out_shape, out, {feats}, [fn, idx, count, c, nvox](Node& self) {
        if (!fn->requires_grad) return;
        fn->ensure_grad();
        for (long i = 0; i < (long)idx.size(); ++i)
            for (int ch = 0; ch < c; ++ch)
                fn->grad[i * c + ch] +=
                    self.grad[ch * nvox + idx[i]] / count[idx[i]];
    });
}

}  // namespace lnr
