// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/tape.hpp"

#include <cmath>

#include "gecolab/errors.hpp"

namespace gecolab::ad {

void Tape::backward(const Var& loss) {
    if (loss.tape() != this) throw NumericError("backward: var from another tape");
    const Node& ln = nodes_[static_cast<size_t>(loss.index())];
    if (ln.val.size() != 1) throw ShapeError("backward: loss must be scalar, got " + Tensor::shape_str(ln.val.shape()));
    if (!ln.requires_grad) return;
    grad_buffer(loss.index())[0] = 1.0;
    for (int i = loss.index(); i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || !n.has_grad || !n.backward) continue;
        n.backward(*this, i);
    }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.val().shape() != b.val().shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + Tensor::shape_str(a.shape()) + " vs " + Tensor::shape_str(b.shape()));
}

// Elementwise unary with derivative computed from (x, y) pairs.
template <class F, class DF>
Var unary(Var a, F f, DF dfdx) {
    Tape& t = *a.tape();
    const Tensor& x = a.val();
    Tensor y(x.shape());
    for (size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai, dfdx](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            const Tensor& x = tp.val(ai);
            const Tensor& y = tp.val(self);
            Tensor& ga = tp.grad_buffer(ai);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

} // namespace

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tape& t = *a.tape();
    Tensor y = a.val();
    y += b.val();
    bool ra = t.requires_grad(a.index()), rb = t.requires_grad(b.index());
    int ai = a.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (ra || rb) {
        bw = [ai, bi, ra, rb](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            if (ra) tp.grad_buffer(ai) += g;
            if (rb) tp.grad_buffer(bi) += g;
        };
    }
    return t.push(std::move(y), ra || rb, std::move(bw));
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tape& t = *a.tape();
    Tensor y = a.val();
    y -= b.val();
    bool ra = t.requires_grad(a.index()), rb = t.requires_grad(b.index());
    int ai = a.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (ra || rb) {
        bw = [ai, bi, ra, rb](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            if (ra) tp.grad_buffer(ai) += g;
            if (rb) tp.grad_buffer(bi).axpy(-1.0, g);
        };
    }
    return t.push(std::move(y), ra || rb, std::move(bw));
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tape& t = *a.tape();
    Tensor y = hadamard(a.val(), b.val());
    bool ra = t.requires_grad(a.index()), rb = t.requires_grad(b.index());
    int ai = a.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (ra || rb) {
        bw = [ai, bi, ra, rb](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            if (ra) {
                const Tensor& bv = tp.val(bi);
                Tensor& ga = tp.grad_buffer(ai);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
            }
            if (rb) {
                const Tensor& av = tp.val(ai);
                Tensor& gb = tp.grad_buffer(bi);
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
            }
        };
    }
    return t.push(std::move(y), ra || rb, std::move(bw));
}

Var scale(Var a, double s) {
    Tape& t = *a.tape();
    Tensor y = a.val();
    y *= s;
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai, s](Tape& tp, int self) { tp.grad_buffer(ai).axpy(s, tp.grad_buffer(self)); };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var add_scalar(Var a, double s) {
    Tape& t = *a.tape();
    Tensor y = a.val();
    for (size_t i = 0; i < y.size(); ++i) y[i] += s;
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai](Tape& tp, int self) { tp.grad_buffer(ai) += tp.grad_buffer(self); };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var add_const(Var a, const Tensor& c) {
    if (a.val().shape() != c.shape()) throw ShapeError("add_const: shape mismatch");
    Tape& t = *a.tape();
    Tensor y = a.val();
    y += c;
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai](Tape& tp, int self) { tp.grad_buffer(ai) += tp.grad_buffer(self); };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var mul_const(Var a, const Tensor& c) {
    if (a.val().shape() != c.shape()) throw ShapeError("mul_const: shape mismatch");
    Tape& t = *a.tape();
    Tensor y = hadamard(a.val(), c);
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        Tensor cc = c;
        bw = [ai, cc = std::move(cc)](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& ga = tp.grad_buffer(ai);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * cc[i];
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var neg(Var a) { return scale(a, -1.0); }

Var silu(Var a) {
    return unary(a,
                 [](double x) { return x / (1.0 + std::exp(-x)); },
                 [](double x, double) {
                     double s = 1.0 / (1.0 + std::exp(-x));
                     return s * (1.0 + x * (1.0 - s));
                 });
}

Var sigmoid(Var a) {
    return unary(a,
                 [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(Var a) {
    return unary(a,
                 [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Var a) {
    return unary(a,
                 [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
                 [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp_clamped(Var a, double lo, double hi) {
    return unary(a,
                 [lo, hi](double x) { return std::exp(std::clamp(x, lo, hi)); },
                 [lo, hi](double x, double y) { return (x > lo && x < hi) ? y : 0.0; });
}

Var square(Var a) {
    return unary(a,
                 [](double x) { return x * x; },
                 [](double x, double) { return 2.0 * x; });
}

Var soft_clamp_unit(Var a, double knee) {
    // y = x for |x| <= k; y = sign(x) * (k + (1-k) * tanh((|x|-k)/(1-k))) beyond.
    double k = knee, r = 1.0 - knee;
    return unary(a,
                 [k, r](double x) {
                     double ax = std::abs(x);
                     if (ax <= k) return x;
                     double s = x > 0 ? 1.0 : -1.0;
                     return s * (k + r * std::tanh((ax - k) / r));
                 },
                 [k, r](double x, double) {
                     double ax = std::abs(x);
                     if (ax <= k) return 1.0;
                     double th = std::tanh((ax - k) / r);
                     return 1.0 - th * th;
                 });
}

Var sum_all(Var a) {
    Tape& t = *a.tape();
    Tensor y({1});
    y[0] = a.val().sum();
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai](Tape& tp, int self) {
            double g = tp.grad_buffer(self)[0];
            Tensor& ga = tp.grad_buffer(ai);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size())); }

Var dot_const(Var a, const Tensor& c) {
    if (a.val().shape() != c.shape()) throw ShapeError("dot_const: shape mismatch");
    Tape& t = *a.tape();
    Tensor y({1});
    y[0] = dot(a.val(), c);
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        Tensor cc = c;
        bw = [ai, cc = std::move(cc)](Tape& tp, int self) {
            double g = tp.grad_buffer(self)[0];
            tp.grad_buffer(ai).axpy(g, cc);
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var mse_const(Var a, const Tensor& target) {
    if (a.val().shape() != target.shape()) throw ShapeError("mse_const: shape mismatch");
    Tape& t = *a.tape();
    const Tensor& x = a.val();
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - target[i];
        acc += d * d;
    }
    Tensor y({1});
    double inv_n = 1.0 / static_cast<double>(x.size());
    y[0] = acc * inv_n;
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        Tensor tt = target;
        bw = [ai, inv_n, tt = std::move(tt)](Tape& tp, int self) {
            double g = tp.grad_buffer(self)[0] * 2.0 * inv_n;
            const Tensor& x = tp.val(ai);
            Tensor& ga = tp.grad_buffer(ai);
            for (size_t i = 0; i < x.size(); ++i) ga[i] += g * (x[i] - tt[i]);
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var reshape(Var a, std::vector<int> shape) {
    Tape& t = *a.tape();
    Tensor y = a.val().reshaped(shape);
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& ga = tp.grad_buffer(ai);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var slice_cols(Var a, int c0, int c1) {
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    if (av.ndim() != 2) throw ShapeError("slice_cols: need 2-d input");
    int n = av.dim(0), c = av.dim(1);
    if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_cols: bad column range");
    int cs = c1 - c0;
    Tensor y({n, cs});
    for (int i = 0; i < n; ++i)
        std::copy_n(av.data() + static_cast<size_t>(i) * c + c0, cs,
                    y.data() + static_cast<size_t>(i) * cs);
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai, n, c, c0, cs](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& ga = tp.grad_buffer(ai);
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < cs; ++k)
                    ga[static_cast<size_t>(i) * c + c0 + k] += g[static_cast<size_t>(i) * cs + k];
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input");
    Tape& t = *parts[0].tape();
    int n = parts[0].val().dim(0);
    int ctot = 0;
    bool rg = false;
    for (const Var& p : parts) {
        if (p.val().ndim() != 2 || p.val().dim(0) != n) throw ShapeError("concat_cols: row mismatch");
        ctot += p.val().dim(1);
        rg = rg || t.requires_grad(p.index());
    }
    Tensor y({n, ctot});
    std::vector<int> idx, widths, offs;
    int off = 0;
    for (const Var& p : parts) {
        int w = p.val().dim(1);
        for (int i = 0; i < n; ++i)
            std::copy_n(p.val().data() + static_cast<size_t>(i) * w, w,
                        y.data() + static_cast<size_t>(i) * ctot + off);
        idx.push_back(p.index());
        widths.push_back(w);
        offs.push_back(off);
        off += w;
    }
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [idx, widths, offs, n, ctot](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            for (size_t p = 0; p < idx.size(); ++p) {
                if (!tp.requires_grad(idx[p])) continue;
                Tensor& gp = tp.grad_buffer(idx[p]);
                int w = widths[p], o = offs[p];
                for (int i = 0; i < n; ++i)
                    for (int k = 0; k < w; ++k)
                        gp[static_cast<size_t>(i) * w + k] += g[static_cast<size_t>(i) * ctot + o + k];
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input");
    Tape& t = *parts[0].tape();
    std::vector<int> trailing(parts[0].val().shape().begin() + 1, parts[0].val().shape().end());
    int rows = 0;
    bool rg = false;
    for (const Var& p : parts) {
        std::vector<int> tr(p.val().shape().begin() + 1, p.val().shape().end());
        if (p.val().ndim() < 1 || tr != trailing) throw ShapeError("concat_rows: trailing dims mismatch");
        rows += p.val().dim(0);
        rg = rg || t.requires_grad(p.index());
    }
    std::vector<int> out_shape = {rows};
    out_shape.insert(out_shape.end(), trailing.begin(), trailing.end());
    Tensor y(out_shape);
    std::vector<int> idx;
    std::vector<size_t> sizes, offs;
    size_t off = 0;
    for (const Var& p : parts) {
        std::copy_n(p.val().data(), p.val().size(), y.data() + off);
        idx.push_back(p.index());
        sizes.push_back(p.val().size());
        offs.push_back(off);
        off += p.val().size();
    }
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [idx, sizes, offs](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            for (size_t p = 0; p < idx.size(); ++p) {
                if (!tp.requires_grad(idx[p])) continue;
                Tensor& gp = tp.grad_buffer(idx[p]);
                const double* src = g.data() + offs[p];
                for (size_t k = 0; k < sizes[p]; ++k) gp[k] += src[k];
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var slice_rows(Var a, int r0, int r1) {
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    if (av.ndim() < 1) throw ShapeError("slice_rows: need >= 1-d input");
    int n = av.dim(0);
    if (r0 < 0 || r1 > n || r0 >= r1) throw ShapeError("slice_rows: bad row range");
    size_t stride = av.size() / static_cast<size_t>(n);
    std::vector<int> out_shape = av.shape();
    out_shape[0] = r1 - r0;
    Tensor y(out_shape);
    std::copy_n(av.data() + static_cast<size_t>(r0) * stride,
                static_cast<size_t>(r1 - r0) * stride, y.data());
    bool rg = t.requires_grad(a.index());
    int ai = a.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [ai, r0, stride](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& ga = tp.grad_buffer(ai);
            double* dst = ga.data() + static_cast<size_t>(r0) * stride;
            for (size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var rows_scale(Var v, const Tensor& m) {
    Tape& t = *v.tape();
    const Tensor& vv = v.val();
    if (vv.ndim() != 2 || vv.dim(1) != 1 || m.ndim() != 2 || m.dim(0) != vv.dim(0))
        throw ShapeError("rows_scale: need [N,1] and const [N,K]");
    int n = m.dim(0), k = m.dim(1);
    Tensor y({n, k});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            y[static_cast<size_t>(i) * k + j] = vv[static_cast<size_t>(i)] * m[static_cast<size_t>(i) * k + j];
    bool rg = t.requires_grad(v.index());
    int vi = v.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        Tensor mc = m;
        bw = [vi, n, k, mc = std::move(mc)](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& gv = tp.grad_buffer(vi);
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int j = 0; j < k; ++j)
                    acc += g[static_cast<size_t>(i) * k + j] * mc[static_cast<size_t>(i) * k + j];
                gv[static_cast<size_t>(i)] += acc;
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

namespace {

// Shared gather/scatter for channel concat of [N,C,H,W] blocks.
struct ChBlock {
    int n, ca, cb, hw;
};

ChBlock concat_dims(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 4 || b.ndim() != 4) throw ShapeError("concat_ch: need 4-d inputs");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
        throw ShapeError("concat_ch: mismatch " + Tensor::shape_str(a.shape()) + " vs " + Tensor::shape_str(b.shape()));
    return {a.dim(0), a.dim(1), b.dim(1), a.dim(2) * a.dim(3)};
}

} // namespace

Var concat_ch(Var a, Var b) {
    Tape& t = *a.tape();
    ChBlock d = concat_dims(a.val(), b.val());
    Tensor y({d.n, d.ca + d.cb, a.val().dim(2), a.val().dim(3)});
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    for (int n = 0; n < d.n; ++n) {
        double* dst = y.data() + static_cast<size_t>(n) * (d.ca + d.cb) * d.hw;
        std::copy_n(av.data() + static_cast<size_t>(n) * d.ca * d.hw, static_cast<size_t>(d.ca) * d.hw, dst);
        std::copy_n(bv.data() + static_cast<size_t>(n) * d.cb * d.hw, static_cast<size_t>(d.cb) * d.hw, dst + static_cast<size_t>(d.ca) * d.hw);
    }
    bool ra = t.requires_grad(a.index()), rb = t.requires_grad(b.index());
    int ai = a.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (ra || rb) {
        bw = [ai, bi, ra, rb, d](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            for (int n = 0; n < d.n; ++n) {
                const double* src = g.data() + static_cast<size_t>(n) * (d.ca + d.cb) * d.hw;
                if (ra) {
                    double* ga = tp.grad_buffer(ai).data() + static_cast<size_t>(n) * d.ca * d.hw;
                    for (size_t i = 0; i < static_cast<size_t>(d.ca) * d.hw; ++i) ga[i] += src[i];
                }
                if (rb) {
                    double* gb = tp.grad_buffer(bi).data() + static_cast<size_t>(n) * d.cb * d.hw;
                    const double* sb = src + static_cast<size_t>(d.ca) * d.hw;
                    for (size_t i = 0; i < static_cast<size_t>(d.cb) * d.hw; ++i) gb[i] += sb[i];
                }
            }
        };
    }
    return t.push(std::move(y), ra || rb, std::move(bw));
}

Var broadcast_concat_ch(Var x, Var c) {
    // x [V,Cx,H,W], c [Cc,H,W] appended to every view.
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    const Tensor& cv = c.val();
    if (xv.ndim() != 4 || cv.ndim() != 3) throw ShapeError("broadcast_concat_ch: need [V,C,H,W] and [C,H,W]");
    if (xv.dim(2) != cv.dim(1) || xv.dim(3) != cv.dim(2)) throw ShapeError("broadcast_concat_ch: spatial mismatch");
    int v = xv.dim(0), cx = xv.dim(1), cc = cv.dim(0), hw = xv.dim(2) * xv.dim(3);
    Tensor y({v, cx + cc, xv.dim(2), xv.dim(3)});
    for (int n = 0; n < v; ++n) {
        double* dst = y.data() + static_cast<size_t>(n) * (cx + cc) * hw;
        std::copy_n(xv.data() + static_cast<size_t>(n) * cx * hw, static_cast<size_t>(cx) * hw, dst);
        std::copy_n(cv.data(), static_cast<size_t>(cc) * hw, dst + static_cast<size_t>(cx) * hw);
    }
    bool rx = t.requires_grad(x.index()), rc = t.requires_grad(c.index());
    int xi = x.index(), ci = c.index();
    std::function<void(Tape&, int)> bw;
    if (rx || rc) {
        bw = [xi, ci, rx, rc, v, cx, cc, hw](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            for (int n = 0; n < v; ++n) {
                const double* src = g.data() + static_cast<size_t>(n) * (cx + cc) * hw;
                if (rx) {
                    double* gx = tp.grad_buffer(xi).data() + static_cast<size_t>(n) * cx * hw;
                    for (size_t i = 0; i < static_cast<size_t>(cx) * hw; ++i) gx[i] += src[i];
                }
                if (rc) {
                    double* gc = tp.grad_buffer(ci).data();
                    const double* sc = src + static_cast<size_t>(cx) * hw;
                    for (size_t i = 0; i < static_cast<size_t>(cc) * hw; ++i) gc[i] += sc[i];
                }
            }
        };
    }
    return t.push(std::move(y), rx || rc, std::move(bw));
}

Var slice_ch(Var x, int c0, int c1) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 4) throw ShapeError("slice_ch: need 4-d input");
    if (c0 < 0 || c1 > xv.dim(1) || c0 >= c1) throw ShapeError("slice_ch: bad channel range");
    int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3), cs = c1 - c0;
    Tensor y({n, cs, xv.dim(2), xv.dim(3)});
    for (int i = 0; i < n; ++i)
        std::copy_n(xv.data() + (static_cast<size_t>(i) * c + c0) * hw, static_cast<size_t>(cs) * hw,
                    y.data() + static_cast<size_t>(i) * cs * hw);
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, n, c, hw, c0, cs](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& gx = tp.grad_buffer(xi);
            for (int i = 0; i < n; ++i) {
                double* dst = gx.data() + (static_cast<size_t>(i) * c + c0) * hw;
                const double* src = g.data() + static_cast<size_t>(i) * cs * hw;
                for (size_t k = 0; k < static_cast<size_t>(cs) * hw; ++k) dst[k] += src[k];
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var add_channel_bias(Var x, Var b) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    const Tensor& bv = b.val();
    if (xv.ndim() != 4 || bv.ndim() != 1 || bv.dim(0) != xv.dim(1))
        throw ShapeError("add_channel_bias: need [N,C,H,W] and [C]");
    int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor y = xv;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            double* row = y.data() + (static_cast<size_t>(i) * c + j) * hw;
            double bj = bv[static_cast<size_t>(j)];
            for (int k = 0; k < hw; ++k) row[k] += bj;
        }
    bool rx = t.requires_grad(x.index()), rb = t.requires_grad(b.index());
    int xi = x.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (rx || rb) {
        bw = [xi, bi, rx, rb, n, c, hw](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            if (rx) tp.grad_buffer(xi) += g;
            if (rb) {
                Tensor& gb = tp.grad_buffer(bi);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < c; ++j) {
                        const double* row = g.data() + (static_cast<size_t>(i) * c + j) * hw;
                        double acc = 0.0;
                        for (int k = 0; k < hw; ++k) acc += row[k];
                        gb[static_cast<size_t>(j)] += acc;
                    }
            }
        };
    }
    return t.push(std::move(y), rx || rb, std::move(bw));
}

Var add_view_bias(Var x, Var e) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    const Tensor& ev = e.val();
    if (xv.ndim() != 4 || ev.ndim() != 2 || ev.dim(0) != xv.dim(0) || ev.dim(1) != xv.dim(1))
        throw ShapeError("add_view_bias: need [V,C,H,W] and [V,C]");
    int v = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor y = xv;
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < c; ++j) {
            double* row = y.data() + (static_cast<size_t>(i) * c + j) * hw;
            double bj = ev[static_cast<size_t>(i) * c + j];
            for (int k = 0; k < hw; ++k) row[k] += bj;
        }
    bool rx = t.requires_grad(x.index()), re = t.requires_grad(e.index());
    int xi = x.index(), ei = e.index();
    std::function<void(Tape&, int)> bw;
    if (rx || re) {
        bw = [xi, ei, rx, re, v, c, hw](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            if (rx) tp.grad_buffer(xi) += g;
            if (re) {
                Tensor& ge = tp.grad_buffer(ei);
                for (int i = 0; i < v; ++i)
                    for (int j = 0; j < c; ++j) {
                        const double* row = g.data() + (static_cast<size_t>(i) * c + j) * hw;
                        double acc = 0.0;
                        for (int k = 0; k < hw; ++k) acc += row[k];
                        ge[static_cast<size_t>(i) * c + j] += acc;
                    }
            }
        };
    }
    return t.push(std::move(y), rx || re, std::move(bw));
}

Tensor finite_difference(Tensor& param, const std::function<double()>& f, double h) {
    Tensor g(param.shape());
    for (size_t i = 0; i < param.size(); ++i) {
        double orig = param[i];
        param[i] = orig + h;
        double fp = f();
        param[i] = orig - h;
        double fm = f();
        param[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

} // namespace gecolab::ad
