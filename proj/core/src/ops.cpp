#include "xmodal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace xmodal {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;
using BackFn = std::function<void(const std::vector<double>&, const GradSinks&)>;

Tensor make_result(Shape shape, std::vector<double> vals, std::vector<NodePtr> parents,
                   BackFn backprop) {
    Tensor out(std::move(shape), std::move(vals));
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
        out.node->requires_grad = true;
        out.node->parents = std::move(parents);
        out.node->backprop = std::move(backprop);
    }
    return out;
}

void check_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw Error(std::string(op) + ": undefined tensor argument");
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
}

// Elementwise binary with scalar broadcast on b.
template <typename Fwd, typename Bwd>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    check_defined(a, op);
    check_defined(b, op);
    const bool bscalar = b.numel() == 1 && a.numel() != 1;
    if (!bscalar) check_same_shape(op, a, b);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bscalar ? bv[0] : bv[i]);
    auto an = a.node;
    auto bn = b.node;
    return make_result(a.shape(), std::move(out), {an, bn},
                       [an, bn, bscalar, bwd](const std::vector<double>& g, const GradSinks& gin) {
                           const auto& av = an->values;
                           const auto& bv = bn->values;
                           for (size_t i = 0; i < g.size(); ++i) {
                               double da, db;
                               bwd(av[i], bscalar ? bv[0] : bv[i], g[i], da, db);
                               if (gin[0]) (*gin[0])[i] += da;
                               if (gin[1]) (*gin[1])[bscalar ? 0 : i] += db;
                           }
                       });
}

template <typename Fwd, typename Bwd>
Tensor ew_unary(const char* op, const Tensor& x, Fwd fwd, Bwd bwd) {
    check_defined(x, op);
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    auto xn = x.node;
    return make_result(x.shape(), std::move(out), {xn},
                       [xn, bwd](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           const auto& xv = xn->values;
                           for (size_t i = 0; i < g.size(); ++i)
                               (*gin[0])[i] += bwd(xv[i]) * g[i];
                       });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return ew_binary(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

Tensor affine(const Tensor& x, double k, double c) {
    return ew_unary(
        "affine", x, [k, c](double v) { return k * v + c; }, [k](double) { return k; });
}

Tensor scalar_mul(const Tensor& x, double k) { return affine(x, k, 0.0); }
Tensor add_scalar(const Tensor& x, double c) { return affine(x, 1.0, c); }

Tensor relu(const Tensor& x) {
    // subgradient at 0 is 0
    return ew_unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min0(const Tensor& x) {
    return ew_unary(
        "clamp_min0", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& x) {
    return ew_unary(
        "softplus", x,
        [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
        [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor exp(const Tensor& x) {
    return ew_unary(
        "exp", x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

Tensor log(const Tensor& x) {
    return ew_unary(
        "log", x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
    return ew_unary(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double v) { return 0.5 / std::sqrt(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw Error("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
    const int64_t R = a.shape()[0], K = a.shape()[1], C = b.shape()[1];
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(static_cast<size_t>(R * C), 0.0);
    for (int64_t r = 0; r < R; ++r)
        for (int64_t k = 0; k < K; ++k) {
            const double x = av[r * K + k];
            if (x == 0.0) continue;
            const double* brow = bv.data() + k * C;
            double* orow = out.data() + r * C;
            for (int64_t c = 0; c < C; ++c) orow[c] += x * brow[c];
        }
    auto an = a.node;
    auto bn = b.node;
    return make_result({R, C}, std::move(out), {an, bn},
                       [an, bn, R, K, C](const std::vector<double>& g, const GradSinks& gin) {
                           const auto& av = an->values;
                           const auto& bv = bn->values;
                           if (gin[0]) {  // dA = G * B^T
                               auto& da = *gin[0];
                               for (int64_t r = 0; r < R; ++r)
                                   for (int64_t k = 0; k < K; ++k) {
                                       double acc = 0.0;
                                       const double* grow = g.data() + r * C;
                                       const double* brow = bv.data() + k * C;
                                       for (int64_t c = 0; c < C; ++c) acc += grow[c] * brow[c];
                                       da[r * K + k] += acc;
                                   }
                           }
                           if (gin[1]) {  // dB = A^T * G
                               auto& db = *gin[1];
                               for (int64_t r = 0; r < R; ++r)
                                   for (int64_t k = 0; k < K; ++k) {
                                       const double x = av[r * K + k];
                                       if (x == 0.0) continue;
                                       const double* grow = g.data() + r * C;
                                       double* drow = db.data() + k * C;
                                       for (int64_t c = 0; c < C; ++c) drow[c] += x * grow[c];
                                   }
                           }
                       });
}

Tensor transpose(const Tensor& x) {
    check_defined(x, "transpose");
    if (x.shape().size() != 2)
        throw Error("transpose: expected 2-D tensor, got " + shape_str(x.shape()));
    const int64_t R = x.shape()[0], C = x.shape()[1];
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) out[c * R + r] = xv[r * C + c];
    auto xn = x.node;
    return make_result({C, R}, std::move(out), {xn},
                       [R, C](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (int64_t r = 0; r < R; ++r)
                               for (int64_t c = 0; c < C; ++c)
                                   (*gin[0])[r * C + c] += g[c * R + r];
                       });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    check_defined(m, "add_rowvec");
    check_defined(v, "add_rowvec");
    if (m.shape().size() != 2 || v.shape().size() != 1 || m.shape()[1] != v.shape()[0])
        throw Error("add_rowvec: shape mismatch " + shape_str(m.shape()) + " vs " +
                    shape_str(v.shape()));
    const int64_t R = m.shape()[0], C = m.shape()[1];
    const auto& mv = m.values();
    const auto& vv = v.values();
    std::vector<double> out(mv.size());
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) out[r * C + c] = mv[r * C + c] + vv[c];
    auto mn = m.node;
    auto vn = v.node;
    return make_result(m.shape(), std::move(out), {mn, vn},
                       [R, C](const std::vector<double>& g, const GradSinks& gin) {
                           if (gin[0])
                               for (size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                           if (gin[1])
                               for (int64_t r = 0; r < R; ++r)
                                   for (int64_t c = 0; c < C; ++c)
                                       (*gin[1])[c] += g[r * C + c];
                       });
}

Tensor add_chanvec(const Tensor& x, const Tensor& v) {
    check_defined(x, "add_chanvec");
    check_defined(v, "add_chanvec");
    if (x.shape().size() != 3 || v.shape().size() != 1 || x.shape()[0] != v.shape()[0])
        throw Error("add_chanvec: shape mismatch " + shape_str(x.shape()) + " vs " +
                    shape_str(v.shape()));
    const int64_t C = x.shape()[0], HW = x.shape()[1] * x.shape()[2];
    const auto& xv = x.values();
    const auto& vv = v.values();
    std::vector<double> out(xv.size());
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < HW; ++i) out[c * HW + i] = xv[c * HW + i] + vv[c];
    auto xn = x.node;
    auto vn = v.node;
    return make_result(x.shape(), std::move(out), {xn, vn},
                       [C, HW](const std::vector<double>& g, const GradSinks& gin) {
                           if (gin[0])
                               for (size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                           if (gin[1])
                               for (int64_t c = 0; c < C; ++c)
                                   for (int64_t i = 0; i < HW; ++i)
                                       (*gin[1])[c] += g[c * HW + i];
                       });
}

Tensor sum_axis(const Tensor& x, int axis) {
    check_defined(x, "sum_axis");
    if (x.shape().size() != 2 || (axis != 0 && axis != 1))
        throw Error("sum_axis: expected 2-D tensor and axis 0/1, got " + shape_str(x.shape()));
    const int64_t R = x.shape()[0], C = x.shape()[1];
    const auto& xv = x.values();
    const int64_t out_n = axis == 0 ? C : R;
    std::vector<double> out(static_cast<size_t>(out_n), 0.0);
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) out[axis == 0 ? c : r] += xv[r * C + c];
    auto xn = x.node;
    return make_result({out_n}, std::move(out), {xn},
                       [R, C, axis](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (int64_t r = 0; r < R; ++r)
                               for (int64_t c = 0; c < C; ++c)
                                   (*gin[0])[r * C + c] += g[axis == 0 ? c : r];
                       });
}

Tensor max_axis(const Tensor& x, int axis) {
    check_defined(x, "max_axis");
    if (x.shape().size() != 2 || (axis != 0 && axis != 1))
        throw Error("max_axis: expected 2-D tensor and axis 0/1, got " + shape_str(x.shape()));
    const int64_t R = x.shape()[0], C = x.shape()[1];
    const auto& xv = x.values();
    const int64_t out_n = axis == 0 ? C : R;
    const int64_t red_n = axis == 0 ? R : C;
    std::vector<double> out(static_cast<size_t>(out_n));
    std::vector<int64_t> arg(static_cast<size_t>(out_n));
    for (int64_t o = 0; o < out_n; ++o) {
        double best = -1e308;
        int64_t bi = 0;
        for (int64_t i = 0; i < red_n; ++i) {
            const double v = axis == 0 ? xv[i * C + o] : xv[o * C + i];
            if (v > best) {  // strict: ties keep the lowest index
                best = v;
                bi = i;
            }
        }
        out[o] = best;
        arg[o] = bi;
    }
    auto xn = x.node;
    return make_result({out_n}, std::move(out), {xn},
                       [C, axis, arg](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (size_t o = 0; o < g.size(); ++o) {
                               const int64_t i = arg[o];
                               const int64_t flat =
                                   axis == 0 ? i * C + static_cast<int64_t>(o)
                                             : static_cast<int64_t>(o) * C + i;
                               (*gin[0])[flat] += g[o];
                           }
                       });
}

Tensor sum_all(const Tensor& x) {
    check_defined(x, "sum_all");
    const auto& xv = x.values();
    double s = 0.0;
    for (double v : xv) s += v;
    auto xn = x.node;
    return make_result({1}, {s}, {xn},
                       [](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (auto& d : *gin[0]) d += g[0];
                       });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat_last: no inputs");
    for (const auto& p : parts) check_defined(p, "concat_last");
    const auto& s0 = parts[0].shape();
    const size_t nd = s0.size();
    int64_t total_last = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != nd)
            throw Error("concat_last: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
        for (size_t d = 0; d + 1 < nd; ++d)
            if (s[d] != s0[d])
                throw Error("concat_last: leading-dim mismatch " + shape_str(s0) + " vs " +
                            shape_str(s));
        total_last += s.back();
    }
    Shape out_shape = s0;
    out_shape.back() = total_last;
    int64_t lead = 1;
    for (size_t d = 0; d + 1 < nd; ++d) lead *= s0[d];
    std::vector<double> out(static_cast<size_t>(lead * total_last));
    std::vector<int64_t> offsets;
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t w = p.shape().back();
        const auto& pv = p.values();
        for (int64_t r = 0; r < lead; ++r)
            std::memcpy(out.data() + r * total_last + off, pv.data() + r * w,
                        static_cast<size_t>(w) * sizeof(double));
        offsets.push_back(off);
        off += w;
    }
    std::vector<NodePtr> parents;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        parents.push_back(p.node);
        widths.push_back(p.shape().back());
    }
    return make_result(out_shape, std::move(out), parents,
                       [lead, total_last, offsets, widths](const std::vector<double>& g,
                                                           const GradSinks& gin) {
                           for (size_t pi = 0; pi < gin.size(); ++pi) {
                               if (!gin[pi]) continue;
                               const int64_t w = widths[pi], o = offsets[pi];
                               for (int64_t r = 0; r < lead; ++r)
                                   for (int64_t c = 0; c < w; ++c)
                                       (*gin[pi])[r * w + c] += g[r * total_last + o + c];
                           }
                       });
}

Tensor concat_axis0(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error("concat_axis0: no inputs");
    for (const auto& p : parts) check_defined(p, "concat_axis0");
    const auto& s0 = parts[0].shape();
    int64_t total0 = 0;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != s0.size())
            throw Error("concat_axis0: rank mismatch " + shape_str(s0) + " vs " + shape_str(s));
        for (size_t d = 1; d < s0.size(); ++d)
            if (s[d] != s0[d])
                throw Error("concat_axis0: trailing-dim mismatch " + shape_str(s0) + " vs " +
                            shape_str(s));
        total0 += s[0];
    }
    Shape out_shape = s0;
    out_shape[0] = total0;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(shape_numel(out_shape)));
    std::vector<NodePtr> parents;
    std::vector<int64_t> sizes;
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        parents.push_back(p.node);
        sizes.push_back(p.numel());
    }
    return make_result(out_shape, std::move(out), parents,
                       [sizes](const std::vector<double>& g, const GradSinks& gin) {
                           int64_t off = 0;
                           for (size_t pi = 0; pi < gin.size(); ++pi) {
                               if (gin[pi])
                                   for (int64_t i = 0; i < sizes[pi]; ++i)
                                       (*gin[pi])[i] += g[off + i];
                               off += sizes[pi];
                           }
                       });
}

Tensor slice_last(const Tensor& x, int64_t start, int64_t len) {
    check_defined(x, "slice_last");
    const auto& s = x.shape();
    const int64_t last = s.back();
    if (start < 0 || len <= 0 || start + len > last)
        throw Error("slice_last: span [" + std::to_string(start) + "," +
                    std::to_string(start + len) + ") out of range for " + shape_str(s));
    int64_t lead = 1;
    for (size_t d = 0; d + 1 < s.size(); ++d) lead *= s[d];
    Shape out_shape = s;
    out_shape.back() = len;
    const auto& xv = x.values();
    std::vector<double> out(static_cast<size_t>(lead * len));
    for (int64_t r = 0; r < lead; ++r)
        std::memcpy(out.data() + r * len, xv.data() + r * last + start,
                    static_cast<size_t>(len) * sizeof(double));
    auto xn = x.node;
    return make_result(out_shape, std::move(out), {xn},
                       [lead, len, last, start](const std::vector<double>& g,
                                                const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (int64_t r = 0; r < lead; ++r)
                               for (int64_t c = 0; c < len; ++c)
                                   (*gin[0])[r * last + start + c] += g[r * len + c];
                       });
}

Tensor l2_normalize_rows(const Tensor& x) {
    check_defined(x, "l2_normalize_rows");
    if (x.shape().size() != 2)
        throw Error("l2_normalize_rows: expected 2-D tensor, got " + shape_str(x.shape()));
    const int64_t R = x.shape()[0], C = x.shape()[1];
    const auto& xv = x.values();
    std::vector<double> norms(static_cast<size_t>(R));
    std::vector<double> out(xv.size());
    for (int64_t r = 0; r < R; ++r) {
        double s = 0.0;
        for (int64_t c = 0; c < C; ++c) s += xv[r * C + c] * xv[r * C + c];
        const double n = std::sqrt(s);
        if (n <= 1e-12)
            throw Error("l2_normalize_rows: row " + std::to_string(r) +
                        " has near-zero norm (dead feature)");
        norms[r] = n;
        for (int64_t c = 0; c < C; ++c) out[r * C + c] = xv[r * C + c] / n;
    }
    auto xn = x.node;
    return make_result(x.shape(), std::move(out), {xn},
                       [xn, R, C, norms](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           const auto& xv = xn->values;
                           // d/dx (x/|x|) = (I - y y^T)/|x| with y = x/|x|
                           for (int64_t r = 0; r < R; ++r) {
                               const double n = norms[r];
                               double dot = 0.0;
                               for (int64_t c = 0; c < C; ++c)
                                   dot += g[r * C + c] * xv[r * C + c] / n;
                               for (int64_t c = 0; c < C; ++c)
                                   (*gin[0])[r * C + c] +=
                                       (g[r * C + c] - dot * xv[r * C + c] / n) / n;
                           }
                       });
}

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
    check_defined(x, "gather_rows");
    if (x.shape().size() != 2)
        throw Error("gather_rows: expected 2-D tensor, got " + shape_str(x.shape()));
    const int64_t R = x.shape()[0], C = x.shape()[1];
    for (int64_t i : idx)
        if (i < 0 || i >= R)
            throw Error("gather_rows: index " + std::to_string(i) + " out of range [0," +
                        std::to_string(R) + ")");
    const auto& xv = x.values();
    const int64_t N = static_cast<int64_t>(idx.size());
    std::vector<double> out(static_cast<size_t>(N * C));
    for (int64_t r = 0; r < N; ++r)
        std::memcpy(out.data() + r * C, xv.data() + idx[r] * C,
                    static_cast<size_t>(C) * sizeof(double));
    auto xn = x.node;
    return make_result({N, C}, std::move(out), {xn},
                       [idx, C](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (size_t r = 0; r < idx.size(); ++r)
                               for (int64_t c = 0; c < C; ++c)
                                   (*gin[0])[idx[r] * C + c] +=
                                       g[static_cast<int64_t>(r) * C + c];
                       });
}

Tensor gather_elems(const Tensor& x, const std::vector<int64_t>& flat_idx) {
    check_defined(x, "gather_elems");
    const int64_t n = x.numel();
    for (int64_t i : flat_idx)
        if (i < 0 || i >= n)
            throw Error("gather_elems: flat index " + std::to_string(i) + " out of range [0," +
                        std::to_string(n) + ")");
    const auto& xv = x.values();
    std::vector<double> out(flat_idx.size());
    for (size_t i = 0; i < flat_idx.size(); ++i) out[i] = xv[flat_idx[i]];
    auto xn = x.node;
    return make_result({static_cast<int64_t>(flat_idx.size())}, std::move(out), {xn},
                       [flat_idx](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (size_t i = 0; i < flat_idx.size(); ++i)
                               (*gin[0])[flat_idx[i]] += g[i];
                       });
}

Tensor weighted_gather_rows(const Tensor& x, const std::vector<int64_t>& idx,
                            const std::vector<double>& w, int64_t k_per_row) {
    check_defined(x, "weighted_gather_rows");
    if (x.shape().size() != 2)
        throw Error("weighted_gather_rows: expected 2-D tensor, got " + shape_str(x.shape()));
    if (idx.size() != w.size() || k_per_row <= 0 ||
        idx.size() % static_cast<size_t>(k_per_row) != 0)
        throw Error("weighted_gather_rows: index/weight layout mismatch");
    const int64_t R = x.shape()[0], C = x.shape()[1];
    const int64_t U = static_cast<int64_t>(idx.size()) / k_per_row;
    for (int64_t i : idx)
        if (i < 0 || i >= R)
            throw Error("weighted_gather_rows: index " + std::to_string(i) + " out of range");
    const auto& xv = x.values();
    std::vector<double> out(static_cast<size_t>(U * C), 0.0);
    for (int64_t u = 0; u < U; ++u)
        for (int64_t k = 0; k < k_per_row; ++k) {
            const double wk = w[u * k_per_row + k];
            const double* row = xv.data() + idx[u * k_per_row + k] * C;
            double* orow = out.data() + u * C;
            for (int64_t c = 0; c < C; ++c) orow[c] += wk * row[c];
        }
    auto xn = x.node;
    return make_result({U, C}, std::move(out), {xn},
                       [idx, w, k_per_row, U, C](const std::vector<double>& g,
                                                 const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (int64_t u = 0; u < U; ++u)
                               for (int64_t k = 0; k < k_per_row; ++k) {
                                   const double wk = w[u * k_per_row + k];
                                   double* drow = gin[0]->data() + idx[u * k_per_row + k] * C;
                                   const double* grow = g.data() + u * C;
                                   for (int64_t c = 0; c < C; ++c) drow[c] += wk * grow[c];
                               }
                       });
}

Tensor rowgroup_max(const Tensor& x, int64_t k) {
    check_defined(x, "rowgroup_max");
    if (x.shape().size() != 2 || k <= 0 || x.shape()[0] % k != 0)
        throw Error("rowgroup_max: group size " + std::to_string(k) + " incompatible with " +
                    shape_str(x.shape()));
    const int64_t G = x.shape()[0] / k, C = x.shape()[1];
    const auto& xv = x.values();
    std::vector<double> out(static_cast<size_t>(G * C));
    std::vector<int64_t> arg(static_cast<size_t>(G * C));
    for (int64_t g = 0; g < G; ++g)
        for (int64_t c = 0; c < C; ++c) {
            double best = -1e308;
            int64_t bi = 0;
            for (int64_t i = 0; i < k; ++i) {
                const double v = xv[(g * k + i) * C + c];
                if (v > best) {
                    best = v;
                    bi = i;
                }
            }
            out[g * C + c] = best;
            arg[g * C + c] = g * k + bi;
        }
    auto xn = x.node;
    return make_result({G, C}, std::move(out), {xn},
                       [arg, C](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (size_t i = 0; i < g.size(); ++i)
                               (*gin[0])[arg[i] * C + static_cast<int64_t>(i) % C] += g[i];
                       });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int64_t stride,
              int64_t padding) {
    check_defined(input, "conv2d");
    check_defined(weight, "conv2d");
    if (input.shape().size() != 3 || weight.shape().size() != 4 ||
        input.shape()[0] != weight.shape()[1])
        throw Error("conv2d: shape mismatch input " + shape_str(input.shape()) + " weight " +
                    shape_str(weight.shape()));
    const int64_t Cin = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    const int64_t Cout = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
    const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0)
        throw Error("conv2d: kernel " + shape_str(weight.shape()) + " does not fit input " +
                    shape_str(input.shape()));
    if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != Cout))
        throw Error("conv2d: bias shape mismatch " + shape_str(bias.shape()));
    const auto& xv = input.values();
    const auto& wv = weight.values();
    std::vector<double> out(static_cast<size_t>(Cout * Ho * Wo), 0.0);
    for (int64_t co = 0; co < Cout; ++co) {
        for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t r = 0; r < kh; ++r)
                for (int64_t s = 0; s < kw; ++s) {
                    const double wgt = wv[((co * Cin + ci) * kh + r) * kw + s];
                    if (wgt == 0.0) continue;
                    for (int64_t oy = 0; oy < Ho; ++oy) {
                        const int64_t iy = oy * stride + r - padding;
                        if (iy < 0 || iy >= H) continue;
                        const double* irow = xv.data() + (ci * H + iy) * W;
                        double* orow = out.data() + (co * Ho + oy) * Wo;
                        for (int64_t ox = 0; ox < Wo; ++ox) {
                            const int64_t ix = ox * stride + s - padding;
                            if (ix < 0 || ix >= W) continue;
                            orow[ox] += wgt * irow[ix];
                        }
                    }
                }
        if (bias.defined()) {
            const double b = bias.values()[co];
            for (int64_t i = 0; i < Ho * Wo; ++i) out[co * Ho * Wo + i] += b;
        }
    }
    auto xn = input.node;
    auto wn = weight.node;
    std::vector<NodePtr> parents{xn, wn};
    if (bias.defined()) parents.push_back(bias.node);
    return make_result(
        {Cout, Ho, Wo}, std::move(out), parents,
        [xn, wn, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, padding](
            const std::vector<double>& g, const GradSinks& gin) {
            const auto& xv = xn->values;
            const auto& wv = wn->values;
            for (int64_t co = 0; co < Cout; ++co) {
                for (int64_t ci = 0; ci < Cin; ++ci)
                    for (int64_t r = 0; r < kh; ++r)
                        for (int64_t s = 0; s < kw; ++s) {
                            const int64_t widx = ((co * Cin + ci) * kh + r) * kw + s;
                            const double wgt = wv[widx];
                            double wacc = 0.0;
                            for (int64_t oy = 0; oy < Ho; ++oy) {
                                const int64_t iy = oy * stride + r - padding;
                                if (iy < 0 || iy >= H) continue;
                                const double* grow = g.data() + (co * Ho + oy) * Wo;
                                const double* irow = xv.data() + (ci * H + iy) * W;
                                double* drow =
                                    gin[0] ? gin[0]->data() + (ci * H + iy) * W : nullptr;
                                for (int64_t ox = 0; ox < Wo; ++ox) {
                                    const int64_t ix = ox * stride + s - padding;
                                    if (ix < 0 || ix >= W) continue;
                                    const double go = grow[ox];
                                    wacc += go * irow[ix];
                                    if (drow) drow[ix] += go * wgt;
                                }
                            }
                            if (gin[1]) (*gin[1])[widx] += wacc;
                        }
                if (gin.size() > 2 && gin[2]) {
                    double bacc = 0.0;
                    for (int64_t i = 0; i < Ho * Wo; ++i) bacc += g[co * Ho * Wo + i];
                    (*gin[2])[co] += bacc;
                }
            }
        });
}

Tensor deconv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    check_defined(input, "deconv2d");
    check_defined(weight, "deconv2d");
    if (input.shape().size() != 3 || weight.shape().size() != 4 ||
        input.shape()[0] != weight.shape()[0] || weight.shape()[2] != 2 ||
        weight.shape()[3] != 2)
        throw Error("deconv2d: shape mismatch input " + shape_str(input.shape()) + " weight " +
                    shape_str(weight.shape()));
    const int64_t Cin = input.shape()[0], H = input.shape()[1], W = input.shape()[2];
    const int64_t Cout = weight.shape()[1];
    const int64_t Ho = 2 * H, Wo = 2 * W;
    if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != Cout))
        throw Error("deconv2d: bias shape mismatch " + shape_str(bias.shape()));
    const auto& xv = input.values();
    const auto& wv = weight.values();
    std::vector<double> out(static_cast<size_t>(Cout * Ho * Wo), 0.0);
    for (int64_t ci = 0; ci < Cin; ++ci)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t r = 0; r < 2; ++r)
                for (int64_t s = 0; s < 2; ++s) {
                    const double wgt = wv[((ci * Cout + co) * 2 + r) * 2 + s];
                    if (wgt == 0.0) continue;
                    for (int64_t iy = 0; iy < H; ++iy) {
                        const double* irow = xv.data() + (ci * H + iy) * W;
                        double* orow = out.data() + (co * Ho + iy * 2 + r) * Wo + s;
                        for (int64_t ix = 0; ix < W; ++ix) orow[ix * 2] += wgt * irow[ix];
                    }
                }
    if (bias.defined())
        for (int64_t co = 0; co < Cout; ++co) {
            const double b = bias.values()[co];
            for (int64_t i = 0; i < Ho * Wo; ++i) out[co * Ho * Wo + i] += b;
        }
    auto xn = input.node;
    auto wn = weight.node;
    std::vector<NodePtr> parents{xn, wn};
    if (bias.defined()) parents.push_back(bias.node);
    return make_result(
        {Cout, Ho, Wo}, std::move(out), parents,
        [xn, wn, Cin, H, W, Cout, Ho, Wo](const std::vector<double>& g, const GradSinks& gin) {
            const auto& xv = xn->values;
            const auto& wv = wn->values;
            for (int64_t ci = 0; ci < Cin; ++ci)
                for (int64_t co = 0; co < Cout; ++co)
                    for (int64_t r = 0; r < 2; ++r)
                        for (int64_t s = 0; s < 2; ++s) {
                            const int64_t widx = ((ci * Cout + co) * 2 + r) * 2 + s;
                            const double wgt = wv[widx];
                            double wacc = 0.0;
                            for (int64_t iy = 0; iy < H; ++iy) {
                                const double* irow = xv.data() + (ci * H + iy) * W;
                                const double* grow =
                                    g.data() + (co * Ho + iy * 2 + r) * Wo + s;
                                double* drow =
                                    gin[0] ? gin[0]->data() + (ci * H + iy) * W : nullptr;
                                for (int64_t ix = 0; ix < W; ++ix) {
                                    const double go = grow[ix * 2];
                                    wacc += go * irow[ix];
                                    if (drow) drow[ix] += go * wgt;
                                }
                            }
                            if (gin[1]) (*gin[1])[widx] += wacc;
                        }
            if (gin.size() > 2 && gin[2])
                for (int64_t co = 0; co < Cout; ++co) {
                    double bacc = 0.0;
                    for (int64_t i = 0; i < Ho * Wo; ++i) bacc += g[co * Ho * Wo + i];
                    (*gin[2])[co] += bacc;
                }
        });
}

Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    check_defined(x, "channel_norm");
    check_defined(gamma, "channel_norm");
    check_defined(beta, "channel_norm");
    if (x.shape().size() != 3 || gamma.shape().size() != 1 || beta.shape().size() != 1 ||
        gamma.shape()[0] != x.shape()[0] || beta.shape()[0] != x.shape()[0])
        throw Error("channel_norm: shape mismatch x " + shape_str(x.shape()) + " gamma " +
                    shape_str(gamma.shape()) + " beta " + shape_str(beta.shape()));
    const int64_t C = x.shape()[0], HW = x.shape()[1] * x.shape()[2];
    const auto& xv = x.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    std::vector<double> out(xv.size());
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_std(static_cast<size_t>(C));
    for (int64_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (int64_t i = 0; i < HW; ++i) mean += xv[c * HW + i];
        mean /= static_cast<double>(HW);
        double var = 0.0;
        for (int64_t i = 0; i < HW; ++i) {
            const double d = xv[c * HW + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(HW);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[c] = is;
        for (int64_t i = 0; i < HW; ++i) {
            const double h = (xv[c * HW + i] - mean) * is;
            xhat[c * HW + i] = h;
            out[c * HW + i] = gv[c] * h + bv[c];
        }
    }
    auto xn = x.node;
    auto gn = gamma.node;
    auto bn = beta.node;
    return make_result(
        x.shape(), std::move(out), {xn, gn, bn},
        [gn, C, HW, xhat, inv_std](const std::vector<double>& g, const GradSinks& gin) {
            const auto& gv = gn->values;
            for (int64_t c = 0; c < C; ++c) {
                double gsum = 0.0, ghsum = 0.0;
                for (int64_t i = 0; i < HW; ++i) {
                    gsum += g[c * HW + i];
                    ghsum += g[c * HW + i] * xhat[c * HW + i];
                }
                if (gin[1]) (*gin[1])[c] += ghsum;
                if (gin[2]) (*gin[2])[c] += gsum;
                if (gin[0]) {
                    const double inv_n = 1.0 / static_cast<double>(HW);
                    const double k = gv[c] * inv_std[c];
                    for (int64_t i = 0; i < HW; ++i)
                        (*gin[0])[c * HW + i] +=
                            k * (g[c * HW + i] - gsum * inv_n -
                                 xhat[c * HW + i] * ghsum * inv_n);
                }
            }
        });
}

Tensor gather_pixels(const Tensor& map, const std::vector<std::pair<int64_t, int64_t>>& pixels) {
    check_defined(map, "gather_pixels");
    if (map.shape().size() != 3)
        throw Error("gather_pixels: expected [D,H,W] map, got " + shape_str(map.shape()));
    const int64_t D = map.shape()[0], H = map.shape()[1], W = map.shape()[2];
    for (const auto& [r, c] : pixels)
        if (r < 0 || r >= H || c < 0 || c >= W)
            throw Error("gather_pixels: pixel (" + std::to_string(r) + "," + std::to_string(c) +
                        ") out of bounds for " + shape_str(map.shape()));
    const auto& mv = map.values();
    const int64_t N = static_cast<int64_t>(pixels.size());
    std::vector<double> out(static_cast<size_t>(N * D));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t d = 0; d < D; ++d)
            out[n * D + d] = mv[(d * H + pixels[n].first) * W + pixels[n].second];
    auto mn = map.node;
    return make_result({N, D}, std::move(out), {mn},
                       [pixels, D, H, W](const std::vector<double>& g, const GradSinks& gin) {
                           if (!gin[0]) return;
                           for (size_t n = 0; n < pixels.size(); ++n)
                               for (int64_t d = 0; d < D; ++d)
                                   (*gin[0])[(d * H + pixels[n].first) * W + pixels[n].second] +=
                                       g[static_cast<int64_t>(n) * D + d];
                       });
}

}  // namespace xmodal
