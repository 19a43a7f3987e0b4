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

// Generic binary op with size-1 broadcast on either side.
Tensor binary(const Tensor& a, const Tensor& b,
              std::function<Array(const Array&, const Array&)> fwd,
              std::function<Array(const Array&, const Array&, const Array&)> dfda,
              std::function<Array(const Array&, const Array&, const Array&)> dfdb) {
    Array av = a.values(), bv = b.values();
    Shape out_shape;
    if (a.shape() == b.shape()) {
        out_shape = a.shape();
    } else if (b.size() == 1) {
        out_shape = a.shape();
        bv = Array::Constant(a.size(), bv[0]);
    } else if (a.size() == 1) {
        out_shape = b.shape();
        av = Array::Constant(b.size(), av[0]);
    } else {
        fail_shape("binary op shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
    }
    Array out = fwd(av, bv);
    auto an = a.node(), bn = b.node();
    return make_op(out_shape, out, {a, b},
                   [an, bn, av, bv, dfda, dfdb](Node& self) {
                       if (an->requires_grad) {
                           Array ga = dfda(self.grad, av, bv);
                           if (an->values.size() == 1 && ga.size() != 1) {
                               Array s(1); s[0] = ga.sum(); ga = s;
                           }
                           accum(an, ga);
                       }
                       if (bn->requires_grad) {
                           Array gb = dfdb(self.grad, av, bv);
                           if (bn->values.size() == 1 && gb.size() != 1) {
                               Array s(1); s[0] = gb.sum(); gb = s;
                           }
                           accum(bn, gb);
                       }
                   });
}

Tensor unary(const Tensor& x, std::function<Array(const Array&)> fwd,
             std::function<Array(const Array&, const Array&, const Array&)> bwd) {
    Array xv = x.values();
    Array out = fwd(xv);
    auto xn = x.node();
    Array outv = out;
    return make_op(x.shape(), out, {x}, [xn, xv, outv, bwd](Node& self) {
        accum(xn, bwd(self.grad, xv, outv));
    });
}

std::vector<long> strides_of(const Shape& s) {
    std::vector<long> st(s.size());
    long acc = 1;
    for (int i = (int)s.size() - 1; i >= 0; --i) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
    return binary(a, b, [](const Array& x, const Array& y) { return Array(x + y); },
                  [](const Array& g, const Array&, const Array&) { return g; },
                  [](const Array& g, const Array&, const Array&) { return g; });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    return binary(a, b, [](const Array& x, const Array& y) { return Array(x - y); },
                  [](const Array& g, const Array&, const Array&) { return g; },
                  [](const Array& g, const Array&, const Array&) { return Array(-g); });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
    return binary(a, b, [](const Array& x, const Array& y) { return Array(x * y); },
                  [](const Array& g, const Array&, const Array& y) { return Array(g * y); },
                  [](const Array& g, const Array& x, const Array&) { return Array(g * x); });
}

Tensor operator/(const Tensor& a, const Tensor& b) {
    return binary(a, b, [](const Array& x, const Array& y) { return Array(x / y); },
                  [](const Array& g, const Array&, const Array& y) { return Array(g / y); },
                  [](const Array& g, const Array& x, const Array& y) {
                      return Array(-g * x / (y * y));
                  });
}

Tensor operator-(const Tensor& a) { return a * (-1.0); }
Tensor operator+(const Tensor& a, Scalar s) { return a + Tensor::scalar(s); }
Tensor operator+(Scalar s, const Tensor& a) { return a + s; }
Tensor operator-(const Tensor& a, Scalar s) { return a + (-s); }
Tensor operator-(Scalar s, const Tensor& a) { return Tensor::scalar(s) - a; }
Tensor operator*(const Tensor& a, Scalar s) { return a * Tensor::scalar(s); }
Tensor operator*(Scalar s, const Tensor& a) { return a * s; }
Tensor operator/(const Tensor& a, Scalar s) { return a * (1.0 / s); }

Tensor add_rowwise(const Tensor& mat, const Tensor& row) {
    long c = row.size();
    if (c == 0 || mat.size() % c != 0) fail_shape("add_rowwise: width mismatch");
    long r = mat.size() / c;
    Array out = mat.values();
    for (long i = 0; i < r; ++i) out.segment(i * c, c) += row.values();
    auto mn = mat.node(), rn = row.node();
    return make_op(mat.shape(), out, {mat, row}, [mn, rn, r, c](Node& self) {
        accum(mn, self.grad);
        if (rn->requires_grad) {
            Array gr = Array::Zero(c);
            for (long i = 0; i < r; ++i) gr += self.grad.segment(i * c, c);
            accum(rn, gr);
        }
    });
}

Tensor mul_colwise(const Tensor& mat, const Tensor& col) {
    long r = col.size();
    if (r == 0 || mat.size() % r != 0) fail_shape("mul_colwise: height mismatch");
    long c = mat.size() / r;
    Array out = mat.values();
    for (long i = 0; i < r; ++i) out.segment(i * c, c) *= col.values()[i];
    auto mn = mat.node(), cn = col.node();
    Array mv = mat.values(), cv = col.values();
    return make_op(mat.shape(), out, {mat, col}, [mn, cn, mv, cv, r, c](Node& self) {
        if (mn->requires_grad) {
            Array gm = self.grad;
            for (long i = 0; i < r; ++i) gm.segment(i * c, c) *= cv[i];
            accum(mn, gm);
        }
        if (cn->requires_grad) {
            Array gc = Array::Zero(r);
            for (long i = 0; i < r; ++i)
                gc[i] = (self.grad.segment(i * c, c) * mv.segment(i * c, c)).sum();
            accum(cn, gc);
        }
    });
}

Tensor texp(const Tensor& x) {
    return unary(x, [](const Array& v) { return Array(v.exp()); },
                 [](const Array& g, const Array&, const Array& o) { return Array(g * o); });
}

Tensor tlog(const Tensor& x) {
    return unary(x, [](const Array& v) { return Array(v.log()); },
                 [](const Array& g, const Array& v, const Array&) { return Array(g / v); });
}

Tensor tsqrt(const Tensor& x) {
    return unary(x, [](const Array& v) { return Array(v.sqrt()); },
                 [](const Array& g, const Array&, const Array& o) {
                     return Array(g / (2.0 * o));
                 });
}

Tensor tsin(const Tensor& x) {
    return unary(x, [](const Array& v) { return Array(v.sin()); },
                 [](const Array& g, const Array& v, const Array&) {
                     return Array(g * v.cos());
                 });
}

Tensor tcos(const Tensor& x) {
    return unary(x, [](const Array& v) { return Array(v.cos()); },
                 [](const Array& g, const Array& v, const Array&) {
                     return Array(-g * v.sin());
                 });
}

Tensor sigmoid(const Tensor& x) {
    return unary(x,
                 [](const Array& v) { return Array(1.0 / (1.0 + (-v).exp())); },
                 [](const Array& g, const Array&, const Array& o) {
                     return Array(g * o * (1.0 - o));
                 });
}

Tensor softplus(const Tensor& x) {
    return unary(x,
                 [](const Array& v) {
                     // log(1+e^x), overflow-safe
                     return Array(v.unaryExpr([](Scalar t) {
                         return t > 30.0 ? t : std::log1p(std::exp(t));
                     }));
                 },
                 [](const Array& g, const Array& v, const Array&) {
                     return Array(g * (1.0 / (1.0 + (-v).exp())));
                 });
}

Tensor relu(const Tensor& x) {
    return unary(x, [](const Array& v) { return Array(v.max(0.0)); },
                 [](const Array& g, const Array& v, const Array&) {
                     return Array((v > 0.0).select(g, Array::Zero(g.size())));
                 });
}

namespace {
Scalar coef_a(Scalar t) {
    if (t < 1e-12) return 1.0 - t / 6.0 + t * t / 120.0;
    Scalar s = std::sqrt(t);
    return std::sin(s) / s;
}
Scalar coef_a_d(Scalar t) {
    if (t < 1e-12) return -1.0 / 6.0 + t / 60.0;
    Scalar s = std::sqrt(t);
    return (s * std::cos(s) - std::sin(s)) / (2.0 * s * s * s);
}
Scalar coef_b(Scalar t) {
    if (t < 1e-12) return 0.5 - t / 24.0 + t * t / 720.0;
    Scalar s = std::sqrt(t);
    return (1.0 - std::cos(s)) / t;
}
Scalar coef_b_d(Scalar t) {
    if (t < 1e-12) return -1.0 / 24.0 + t / 360.0;
    Scalar s = std::sqrt(t);
    return (s * std::sin(s) - 2.0 * (1.0 - std::cos(s))) / (2.0 * t * t);
}
}  // namespace

Tensor rot_coef_a(const Tensor& t) {
    return unary(t, [](const Array& v) { return Array(v.unaryExpr(&coef_a)); },
                 [](const Array& g, const Array& v, const Array&) {
                     return Array(g * v.unaryExpr(&coef_a_d));
                 });
}

Tensor rot_coef_b(const Tensor& t) {
    return unary(t, [](const Array& v) { return Array(v.unaryExpr(&coef_b)); },
                 [](const Array& g, const Array& v, const Array&) {
                     return Array(g * v.unaryExpr(&coef_b_d));
                 });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (shape_size(shape) != x.size())
        fail_shape("reshape: size mismatch " + shape_str(x.shape()) + " -> " +
                   shape_str(shape));
    auto xn = x.node();
    return make_op(shape, x.values(), {x},
                   [xn](Node& self) { accum(xn, self.grad); });
}

Tensor transpose2d(const Tensor& x) {
    if (x.ndim() != 2) fail_shape("transpose2d: expected 2-d tensor");
    long r = x.dim(0), c = x.dim(1);
    Array out(x.size());
    MapMat(out.data(), c, r) = CMapMat(x.values().data(), r, c).transpose();
    auto xn = x.node();
    return make_op({(int)c, (int)r}, out, {x}, [xn, r, c](Node& self) {
        Array g(r * c);
        MapMat(g.data(), r, c) = CMapMat(self.grad.data(), c, r).transpose();
        accum(xn, g);
    });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= (int)s.size() || start < 0 || len <= 0 ||
        start + len > s[axis])
        fail_shape("slice: bad range on " + shape_str(s));
    Shape out_shape = s;
    out_shape[axis] = len;
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < (int)s.size(); ++i) inner *= s[i];
    long ax = s[axis];
    Array out(outer * len * inner);
    for (long o = 0; o < outer; ++o)
        out.segment(o * len * inner, len * inner) =
            x.values().segment((o * ax + start) * inner, len * inner);
    auto xn = x.node();
    return make_op(out_shape, out, {x},
                   [xn, outer, inner, ax, start, len](Node& self) {
                       if (!xn->requires_grad) return;
                       xn->ensure_grad();
                       for (long o = 0; o < outer; ++o)
                           xn->grad.segment((o * ax + start) * inner, len * inner) +=
                               self.grad.segment(o * len * inner, len * inner);
                   });
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) fail_shape("concat: empty input");
    const Shape& s0 = xs[0].shape();
    if (axis < 0 || axis >= (int)s0.size()) fail_shape("concat: bad axis");
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[i];
    for (int i = axis + 1; i < (int)s0.size(); ++i) inner *= s0[i];
    int total = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if ((int)s.size() != (int)s0.size()) fail_shape("concat: rank mismatch");
        for (int i = 0; i < (int)s.size(); ++i)
            if (i != axis && s[i] != s0[i]) fail_shape("concat: extent mismatch");
        total += s[axis];
    }
    Shape out_shape = s0;
    out_shape[axis] = total;
    Array out(outer * total * inner);
    long off = 0;
    std::vector<long> parts;
    for (const auto& x : xs) {
        long ax = x.dim(axis);
        parts.push_back(ax);
        for (long o = 0; o < outer; ++o)
            out.segment((o * total + off) * inner, ax * inner) =
                x.values().segment(o * ax * inner, ax * inner);
        off += ax;
    }
    std::vector<NodePtr> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    return make_op(out_shape, out, xs,
                   [nodes, parts, outer, inner, total](Node& self) {
                       long off2 = 0;
                       for (size_t i = 0; i < nodes.size(); ++i) {
                           long ax = parts[i];
                           if (nodes[i]->requires_grad) {
                               nodes[i]->ensure_grad();
                               for (long o = 0; o < outer; ++o)
                                   nodes[i]->grad.segment(o * ax * inner, ax * inner) +=
                                       self.grad.segment((o * total + off2) * inner,
                                                         ax * inner);
                           }
                           off2 += ax;
                       }
                   });
}

Tensor stack(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) fail_shape("stack: empty input");
    std::vector<Tensor> expanded;
    Shape s = xs[0].shape();
    if (axis < 0 || axis > (int)s.size()) fail_shape("stack: bad axis");
    Shape es = s;
    es.insert(es.begin() + axis, 1);
    for (const auto& x : xs) {
        if (x.shape() != s) fail_shape("stack: shape mismatch");
        expanded.push_back(reshape(x, es));
    }
    return concat(expanded, axis);
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
    long n = x.dim(0);
    long inner = x.size() / n;
    Shape out_shape = x.shape();
    out_shape[0] = (int)idx.size();
    Array out(idx.size() * inner);
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= n) fail_shape("gather_rows: index out of range");
        out.segment(i * inner, inner) = x.values().segment(idx[i] * inner, inner);
    }
    auto xn = x.node();
    return make_op(out_shape, out, {x}, [xn, idx, inner](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (size_t i = 0; i < idx.size(); ++i)
            xn->grad.segment(idx[i] * inner, inner) +=
                self.grad.segment(i * inner, inner);
    });
}

Tensor sum_all(const Tensor& x) {
    Array out(1);
    out[0] = x.values().sum();
    auto xn = x.node();
    return make_op({1}, out, {x}, [xn](Node& self) {
        accum(xn, Array::Constant(xn->values.size(), self.grad[0]));
    });
}

Tensor mean_all(const Tensor& x) { return sum_all(x) / (Scalar)x.size(); }

Tensor sum_axis(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= (int)s.size()) fail_shape("sum_axis: bad axis");
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < (int)s.size(); ++i) inner *= s[i];
    long ax = s[axis];
    Shape out_shape;
    for (int i = 0; i < (int)s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    Array out = Array::Zero(outer * inner);
    for (long o = 0; o < outer; ++o)
        for (long a = 0; a < ax; ++a)
            out.segment(o * inner, inner) +=
                x.values().segment((o * ax + a) * inner, inner);
    auto xn = x.node();
    return make_op(out_shape, out, {x}, [xn, outer, inner, ax](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long o = 0; o < outer; ++o)
            for (long a = 0; a < ax; ++a)
                xn->grad.segment((o * ax + a) * inner, inner) +=
                    self.grad.segment(o * inner, inner);
    });
}

Tensor mean_axis(const Tensor& x, int axis) {
    return sum_axis(x, axis) / (Scalar)x.dim(axis);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        fail_shape("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                   shape_str(b.shape()));
    long m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Array out(m * n);
    MapMat(out.data(), m, n) = CMapMat(a.values().data(), m, k) *
                               CMapMat(b.values().data(), k, n);
    auto an = a.node(), bn = b.node();
    Array av = a.values(), bv = b.values();
    return make_op({(int)m, (int)n}, out, {a, b}, [an, bn, av, bv, m, k, n](Node& self) {
        CMapMat g(self.grad.data(), m, n);
        if (an->requires_grad) {
            Array ga(m * k);
            MapMat(ga.data(), m, k) = g * CMapMat(bv.data(), k, n).transpose();
            accum(an, ga);
        }
        if (bn->requires_grad) {
            Array gb(k * n);
            MapMat(gb.data(), k, n) = CMapMat(av.data(), m, k).transpose() * g;
            accum(bn, gb);
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
        fail_shape("bmm: incompatible shapes");
    long p = a.dim(0), m = a.dim(1), k = a.dim(2);
    long bk = trans_b ? b.dim(2) : b.dim(1);
    long n = trans_b ? b.dim(1) : b.dim(2);
    if (bk != k) fail_shape("bmm: inner extent mismatch");
    Array out(p * m * n);
    const Scalar* ad = a.values().data();
    const Scalar* bd = b.values().data();
    for (long i = 0; i < p; ++i) {
        CMapMat A(ad + i * m * k, m, k);
        MapMat O(out.data() + i * m * n, m, n);
        if (trans_b)
            O = A * CMapMat(bd + i * n * k, n, k).transpose();
        else
            O = A * CMapMat(bd + i * k * n, k, n);
    }
    auto an = a.node(), bn = b.node();
    Array av = a.values(), bv = b.values();
    return make_op({(int)p, (int)m, (int)n}, out, {a, b},
                   [an, bn, av, bv, p, m, k, n, trans_b](Node& self) {
        for (long i = 0; i < p; ++i) {
            CMapMat G(self.grad.data() + i * m * n, m, n);
            if (an->requires_grad) {
                an->ensure_grad();
                MapMat GA(an->grad.data() + i * m * k, m, k);
                if (trans_b)
                    GA += G * CMapMat(bv.data() + i * n * k, n, k);
                else
                    GA += G * CMapMat(bv.data() + i * k * n, k, n).transpose();
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (trans_b) {
                    MapMat GB(bn->grad.data() + i * n * k, n, k);
                    GB += G.transpose() * CMapMat(av.data() + i * m * k, m, k);
                } else {
                    MapMat GB(bn->grad.data() + i * k * n, k, n);
                    GB += CMapMat(av.data() + i * m * k, m, k).transpose() * G;
                }
            }
        }
    });
}

Tensor softmax(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= (int)s.size()) fail_shape("softmax: bad axis");
    long outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < (int)s.size(); ++i) inner *= s[i];
    long ax = s[axis];
    Array out(x.size());
    const Array& xv = x.values();
    for (long o = 0; o < outer; ++o)
        for (long in = 0; in < inner; ++in) {
            long base = o * ax * inner + in;
            Scalar mx = xv[base];
            for (long a = 1; a < ax; ++a) mx = std::max(mx, xv[base + a * inner]);
            Scalar z = 0;
            for (long a = 0; a < ax; ++a) {
                Scalar e = std::exp(xv[base + a * inner] - mx);
                out[base + a * inner] = e;
                z += e;
            }
            for (long a = 0; a < ax; ++a) out[base + a * inner] /= z;
        }
    auto xn = x.node();
    Array outv = out;
    return make_op(s, out, {x}, [xn, outv, outer, inner, ax](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long o = 0; o < outer; ++o)
            for (long in = 0; in < inner; ++in) {
                long base = o * ax * inner + in;
                Scalar dot = 0;
                for (long a = 0; a < ax; ++a)
                    dot += self.grad[base + a * inner] * outv[base + a * inner];
                for (long a = 0; a < ax; ++a)
                    xn->grad[base + a * inner] +=
                        outv[base + a * inner] * (self.grad[base + a * inner] - dot);
            }
    });
}

Tensor posenc(const Tensor& x, int l) {
    if (l < 0) fail_shape("posenc: negative band count");
    const Shape& s = x.shape();
    if (s.empty() || s.back() != 3) fail_shape("posenc: last extent must be 3");
    long rows = x.size() / 3;
    int width = 6 * l + 3;
    Shape out_shape = s;
    out_shape.back() = width;
    Array out(rows * width);
    const Array& xv = x.values();
    const Scalar pi = M_PI;
    for (long r = 0; r < rows; ++r) {
        for (int c = 0; c < 3; ++c) out[r * width + c] = xv[r * 3 + c];
        for (int f = 0; f < l; ++f) {
            Scalar w = std::ldexp(pi, f);  // 2^f * pi
            for (int c = 0; c < 3; ++c) {
                Scalar v = w * xv[r * 3 + c];
                out[r * width + 3 + 6 * f + c] = std::sin(v);
                out[r * width + 6 + 6 * f + c] = std::cos(v);
            }
        }
    }
    auto xn = x.node();
    Array xvc = xv;
    return make_op(out_shape, out, {x}, [xn, xvc, rows, l, width, pi](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long r = 0; r < rows; ++r) {
            for (int c = 0; c < 3; ++c) {
                Scalar g = self.grad[r * width + c];
                for (int f = 0; f < l; ++f) {
                    Scalar w = std::ldexp(pi, f);
                    Scalar v = w * xvc[r * 3 + c];
                    g += self.grad[r * width + 3 + 6 * f + c] * w * std::cos(v);
                    g -= self.grad[r * width + 6 + 6 * f + c] * w * std::sin(v);
                }
                xn->grad[r * 3 + c] += g;
            }
        }
    });
}

Tensor segment_sum(const Tensor& x, const std::vector<int>& offsets) {
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.dim(0))
        fail_shape("segment_sum: bad offsets");
    long n = x.dim(0), inner = x.size() / n;
    long r = (long)offsets.size() - 1;
    Shape out_shape = x.shape();
    out_shape[0] = (int)r;
    Array out = Array::Zero(r * inner);
    for (long s = 0; s < r; ++s)
        for (int i = offsets[s]; i < offsets[s + 1]; ++i)
            out.segment(s * inner, inner) += x.values().segment(i * inner, inner);
    auto xn = x.node();
    return make_op(out_shape, out, {x}, [xn, offsets, inner](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (long s = 0; s + 1 < (long)offsets.size(); ++s)
            for (int i = offsets[s]; i < offsets[s + 1]; ++i)
                xn->grad.segment(i * inner, inner) +=
                    self.grad.segment(s * inner, inner);
    });
}

Tensor segment_excl_cumsum(const Tensor& x, const std::vector<int>& offsets) {
    if (x.ndim() != 1) fail_shape("segment_excl_cumsum: expected 1-d tensor");
    if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.dim(0))
        fail_shape("segment_excl_cumsum: bad offsets");
    Array out(x.size());
    const Array& xv = x.values();
    for (long s = 0; s + 1 < (long)offsets.size(); ++s) {
        Scalar acc = 0;
        for (int i = offsets[s]; i < offsets[s + 1]; ++i) {
            out[i] = acc;
            acc += xv[i];
        }
    }
    auto xn = x.node();
    return make_op(x.shape(), out, {x}, [xn, offsets](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        // d out_j / d x_i = 1 for i < j within a segment: suffix sums.
        for (long s = 0; s + 1 < (long)offsets.size(); ++s) {
            Scalar acc = 0;
            for (int i = offsets[s + 1] - 1; i >= offsets[s]; --i) {
                xn->grad[i] += acc;
                acc += self.grad[i];
            }
        }
    });
}

}  // namespace lnr
