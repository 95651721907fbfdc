// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/nn_ops.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "gecolab/errors.hpp"

namespace gecolab::ad {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// im2col for one sample: x [Cin,H,W] -> col [Cin*kh*kw, OH*OW].
void im2col(const double* x, int cin, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, double* col) {
    for (int c = 0; c < cin; ++c) {
        const double* plane = x + static_cast<size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                double* row = col + ((static_cast<size_t>(c) * kh + ky) * kw + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::fill_n(row + static_cast<size_t>(oy) * ow, ow, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<size_t>(iy) * w;
                    double* dst = row + static_cast<size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col.
void col2im_add(const double* col, int cin, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, double* x) {
    for (int c = 0; c < cin; ++c) {
        double* plane = x + static_cast<size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const double* row = col + ((static_cast<size_t>(c) * kh + ky) * kw + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = plane + static_cast<size_t>(iy) * w;
                    const double* src = row + static_cast<size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

struct ConvDims {
    int n, cin, h, w, cout, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wt, int stride, int pad) {
    if (x.ndim() != 4 || wt.ndim() != 4) throw ShapeError("conv2d: need 4-d x and w");
    if (x.dim(1) != wt.dim(1)) throw ShapeError("conv2d: channel mismatch");
    ConvDims d;
    d.n = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = wt.dim(0);
    d.kh = wt.dim(2);
    d.kw = wt.dim(3);
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0) throw ShapeError("conv2d: empty output");
    return d;
}

} // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const Tensor& bv = b.val();
    ConvDims d = conv_dims(xv, wv, stride, pad);
    if (bv.ndim() != 1 || bv.dim(0) != d.cout) throw ShapeError("conv2d: bias must be [Cout]");

    int k = d.cin * d.kh * d.kw, m = d.oh * d.ow;
    Tensor y({d.n, d.cout, d.oh, d.ow});
    std::vector<double> col(static_cast<size_t>(k) * m);
    CMapRM wm(wv.data(), d.cout, k);
    for (int n = 0; n < d.n; ++n) {
        im2col(xv.data() + static_cast<size_t>(n) * d.cin * d.h * d.w, d.cin, d.h, d.w, d.kh, d.kw,
               stride, pad, d.oh, d.ow, col.data());
        MapRM om(y.data() + static_cast<size_t>(n) * d.cout * m, d.cout, m);
        CMapRM cm(col.data(), k, m);
        om.noalias() = wm * cm;
        for (int c = 0; c < d.cout; ++c) om.row(c).array() += bv[static_cast<size_t>(c)];
    }

    bool rx = t.requires_grad(x.index());
    bool rw = t.requires_grad(w.index());
    bool rb = t.requires_grad(b.index());
    int xi = x.index(), wi = w.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (rx || rw || rb) {
        bw = [xi, wi, bi, rx, rw, rb, d, stride, pad, k, m](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            const Tensor& xv = tp.val(xi);
            const Tensor& wv = tp.val(wi);
            std::vector<double> col(static_cast<size_t>(k) * m);
            std::vector<double> dcol(static_cast<size_t>(k) * m);
            CMapRM wm(wv.data(), d.cout, k);
            for (int n = 0; n < d.n; ++n) {
                CMapRM gm(g.data() + static_cast<size_t>(n) * d.cout * m, d.cout, m);
                if (rw || rx) {
                    if (rw) {
                        im2col(xv.data() + static_cast<size_t>(n) * d.cin * d.h * d.w, d.cin, d.h,
                               d.w, d.kh, d.kw, stride, pad, d.oh, d.ow, col.data());
                        MapRM gwm(tp.grad_buffer(wi).data(), d.cout, k);
                        CMapRM cm(col.data(), k, m);
                        gwm.noalias() += gm * cm.transpose();
                    }
                    if (rx) {
                        MapRM dcm(dcol.data(), k, m);
                        dcm.noalias() = wm.transpose() * gm;
                        col2im_add(dcol.data(), d.cin, d.h, d.w, d.kh, d.kw, stride, pad, d.oh,
                                   d.ow,
                                   tp.grad_buffer(xi).data() + static_cast<size_t>(n) * d.cin * d.h * d.w);
                    }
                }
                if (rb) {
                    Tensor& gb = tp.grad_buffer(bi);
                    for (int c = 0; c < d.cout; ++c) gb[static_cast<size_t>(c)] += gm.row(c).sum();
                }
            }
        };
    }
    return t.push(std::move(y), rx || rw || rb, std::move(bw));
}

Var linear(Var x, Var w, Var b) {
    Var y = linear_nobias(x, w);
    const Tensor& bv = b.val();
    if (bv.ndim() != 1 || bv.dim(0) != y.val().shape().back()) throw ShapeError("linear: bias mismatch");
    // Reuse channel-bias logic by viewing [M,Cout] as [M,Cout,1,1].
    std::vector<int> orig = y.val().shape();
    int cout = orig.back();
    int mrows = static_cast<int>(y.val().size()) / cout;
    Var y4 = reshape(y, {mrows, cout, 1, 1});
    Var out = add_channel_bias(y4, b);
    return reshape(out, orig);
}

Var linear_nobias(Var x, Var w) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    if (wv.ndim() != 2) throw ShapeError("linear: w must be [Cin,Cout]");
    int cin = wv.dim(0), cout = wv.dim(1);
    if (xv.shape().back() != cin) throw ShapeError("linear: input feature mismatch");
    int mrows = static_cast<int>(xv.size()) / cin;
    std::vector<int> out_shape = xv.shape();
    out_shape.back() = cout;
    Tensor y(out_shape);
    CMapRM xm(xv.data(), mrows, cin);
    CMapRM wm(wv.data(), cin, cout);
    MapRM ym(y.data(), mrows, cout);
    ym.noalias() = xm * wm;
    bool rx = t.requires_grad(x.index()), rw = t.requires_grad(w.index());
    int xi = x.index(), wi = w.index();
    std::function<void(Tape&, int)> bw;
    if (rx || rw) {
        bw = [xi, wi, rx, rw, mrows, cin, cout](Tape& tp, int self) {
            CMapRM gm(tp.grad_buffer(self).data(), mrows, cout);
            if (rx) {
                CMapRM wm(tp.val(wi).data(), cin, cout);
                MapRM gx(tp.grad_buffer(xi).data(), mrows, cin);
                gx.noalias() += gm * wm.transpose();
            }
            if (rw) {
                CMapRM xm(tp.val(xi).data(), mrows, cin);
                MapRM gw(tp.grad_buffer(wi).data(), cin, cout);
                gw.noalias() += xm.transpose() * gm;
            }
        };
    }
    return t.push(std::move(y), rx || rw, std::move(bw));
}

Var upsample_nearest2(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 4) throw ShapeError("upsample_nearest2: need 4-d input");
    int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    Tensor y({n, c, 2 * h, 2 * w});
    for (int p = 0; p < n * c; ++p) {
        const double* src = xv.data() + static_cast<size_t>(p) * h * w;
        double* dst = y.data() + static_cast<size_t>(p) * 4 * h * w;
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                double v = src[static_cast<size_t>(yy) * w + xx];
                size_t base = (static_cast<size_t>(2 * yy) * 2 * w) + 2 * xx;
                dst[base] = v;
                dst[base + 1] = v;
                dst[base + 2 * w] = v;
                dst[base + 2 * w + 1] = v;
            }
    }
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, n, c, h, w](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& gx = tp.grad_buffer(xi);
            for (int p = 0; p < n * c; ++p) {
                const double* src = g.data() + static_cast<size_t>(p) * 4 * h * w;
                double* dst = gx.data() + static_cast<size_t>(p) * h * w;
                for (int yy = 0; yy < h; ++yy)
                    for (int xx = 0; xx < w; ++xx) {
                        size_t base = (static_cast<size_t>(2 * yy) * 2 * w) + 2 * xx;
                        dst[static_cast<size_t>(yy) * w + xx] +=
                            src[base] + src[base + 1] + src[base + 2 * w] + src[base + 2 * w + 1];
                    }
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var avgpool2(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 4) throw ShapeError("avgpool2: need 4-d input");
    int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avgpool2: H,W must be even");
    int oh = h / 2, ow = w / 2;
    Tensor y({n, c, oh, ow});
    for (int p = 0; p < n * c; ++p) {
        const double* src = xv.data() + static_cast<size_t>(p) * h * w;
        double* dst = y.data() + static_cast<size_t>(p) * oh * ow;
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
                size_t base = (static_cast<size_t>(2 * yy) * w) + 2 * xx;
                dst[static_cast<size_t>(yy) * ow + xx] =
                    0.25 * (src[base] + src[base + 1] + src[base + w] + src[base + w + 1]);
            }
    }
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, n, c, h, w, oh, ow](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& gx = tp.grad_buffer(xi);
            for (int p = 0; p < n * c; ++p) {
                const double* src = g.data() + static_cast<size_t>(p) * oh * ow;
                double* dst = gx.data() + static_cast<size_t>(p) * h * w;
                for (int yy = 0; yy < oh; ++yy)
                    for (int xx = 0; xx < ow; ++xx) {
                        double v = 0.25 * src[static_cast<size_t>(yy) * ow + xx];
                        size_t base = (static_cast<size_t>(2 * yy) * w) + 2 * xx;
                        dst[base] += v;
                        dst[base + 1] += v;
                        dst[base + w] += v;
                        dst[base + w + 1] += v;
                    }
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var group_norm(Var x, int groups, Var gamma, Var beta, double eps) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 4) throw ShapeError("group_norm: need 4-d input");
    int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    if (c % groups != 0) throw ShapeError("group_norm: C not divisible by groups");
    if (gamma.val().size() != static_cast<size_t>(c) || beta.val().size() != static_cast<size_t>(c))
        throw ShapeError("group_norm: affine params must be [C]");
    int cpg = c / groups;
    size_t gsz = static_cast<size_t>(cpg) * hw;

    Tensor y(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(static_cast<size_t>(n) * groups);
    const Tensor& gv = gamma.val();
    const Tensor& bv = beta.val();
    for (int i = 0; i < n; ++i) {
        for (int g = 0; g < groups; ++g) {
            const double* src = xv.data() + (static_cast<size_t>(i) * c + static_cast<size_t>(g) * cpg) * hw;
            double mu = 0.0;
            for (size_t k = 0; k < gsz; ++k) mu += src[k];
            mu /= static_cast<double>(gsz);
            double var = 0.0;
            for (size_t k = 0; k < gsz; ++k) {
                double d = src[k] - mu;
                var += d * d;
            }
            var /= static_cast<double>(gsz);
            double is = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(i) * groups + g] = is;
            double* xh = xhat.data() + (static_cast<size_t>(i) * c + static_cast<size_t>(g) * cpg) * hw;
            double* dst = y.data() + (static_cast<size_t>(i) * c + static_cast<size_t>(g) * cpg) * hw;
            for (int cc = 0; cc < cpg; ++cc) {
                double ga = gv[static_cast<size_t>(g) * cpg + cc];
                double be = bv[static_cast<size_t>(g) * cpg + cc];
                for (int k = 0; k < hw; ++k) {
                    size_t idx = static_cast<size_t>(cc) * hw + k;
                    double xn = (src[idx] - mu) * is;
                    xh[idx] = xn;
                    dst[idx] = ga * xn + be;
                }
            }
        }
    }

    bool rx = t.requires_grad(x.index());
    bool rgm = t.requires_grad(gamma.index());
    bool rbt = t.requires_grad(beta.index());
    int xi = x.index(), gi = gamma.index(), bi = beta.index();
    std::function<void(Tape&, int)> bw;
    if (rx || rgm || rbt) {
        bw = [xi, gi, bi, rx, rgm, rbt, n, c, hw, groups, cpg, gsz,
              xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            const Tensor& gv = tp.val(gi);
            for (int i = 0; i < n; ++i) {
                for (int gr = 0; gr < groups; ++gr) {
                    size_t off = (static_cast<size_t>(i) * c + static_cast<size_t>(gr) * cpg) * static_cast<size_t>(hw);
                    const double* gy = g.data() + off;
                    const double* xh = xhat.data() + off;
                    if (rgm) {
                        Tensor& ggm = tp.grad_buffer(gi);
                        for (int cc = 0; cc < cpg; ++cc) {
                            double acc = 0.0;
                            for (int k = 0; k < hw; ++k) acc += gy[static_cast<size_t>(cc) * hw + k] * xh[static_cast<size_t>(cc) * hw + k];
                            ggm[static_cast<size_t>(gr) * cpg + cc] += acc;
                        }
                    }
                    if (rbt) {
                        Tensor& gbt = tp.grad_buffer(bi);
                        for (int cc = 0; cc < cpg; ++cc) {
                            double acc = 0.0;
                            for (int k = 0; k < hw; ++k) acc += gy[static_cast<size_t>(cc) * hw + k];
                            gbt[static_cast<size_t>(gr) * cpg + cc] += acc;
                        }
                    }
                    if (rx) {
                        // dxhat = gy * gamma; dx = is * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
                        double m1 = 0.0, m2 = 0.0;
                        for (int cc = 0; cc < cpg; ++cc) {
                            double ga = gv[static_cast<size_t>(gr) * cpg + cc];
                            for (int k = 0; k < hw; ++k) {
                                size_t idx = static_cast<size_t>(cc) * hw + k;
                                double dxh = gy[idx] * ga;
                                m1 += dxh;
                                m2 += dxh * xh[idx];
                            }
                        }
                        m1 /= static_cast<double>(gsz);
                        m2 /= static_cast<double>(gsz);
                        double is = inv_std[static_cast<size_t>(i) * groups + gr];
                        double* gx = tp.grad_buffer(xi).data() + off;
                        for (int cc = 0; cc < cpg; ++cc) {
                            double ga = gv[static_cast<size_t>(gr) * cpg + cc];
                            for (int k = 0; k < hw; ++k) {
                                size_t idx = static_cast<size_t>(cc) * hw + k;
                                double dxh = gy[idx] * ga;
                                gx[idx] += is * (dxh - m1 - xh[idx] * m2);
                            }
                        }
                    }
                }
            }
        };
    }
    return t.push(std::move(y), rx || rgm || rbt, std::move(bw));
}

Var softmax_lastdim(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    int k = xv.shape().back();
    int rows = static_cast<int>(xv.size()) / k;
    Tensor y(xv.shape());
    for (int r = 0; r < rows; ++r) {
        const double* src = xv.data() + static_cast<size_t>(r) * k;
        double* dst = y.data() + static_cast<size_t>(r) * k;
        double mx = src[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, src[i]);
        double z = 0.0;
        for (int i = 0; i < k; ++i) {
            dst[i] = std::exp(src[i] - mx);
            z += dst[i];
        }
        double iz = 1.0 / z;
        for (int i = 0; i < k; ++i) dst[i] *= iz;
    }
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, rows, k](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            const Tensor& y = tp.val(self);
            Tensor& gx = tp.grad_buffer(xi);
            for (int r = 0; r < rows; ++r) {
                const double* gy = g.data() + static_cast<size_t>(r) * k;
                const double* yy = y.data() + static_cast<size_t>(r) * k;
                double dotv = 0.0;
                for (int i = 0; i < k; ++i) dotv += gy[i] * yy[i];
                double* dst = gx.data() + static_cast<size_t>(r) * k;
                for (int i = 0; i < k; ++i) dst[i] += yy[i] * (gy[i] - dotv);
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

namespace {

struct BmmDims {
    int b, m, k, n;
};

} // namespace

Var bmm(Var a, Var b) {
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1))
        throw ShapeError("bmm: bad shapes " + Tensor::shape_str(av.shape()) + " x " + Tensor::shape_str(bv.shape()));
    BmmDims d{av.dim(0), av.dim(1), av.dim(2), bv.dim(2)};
    Tensor y({d.b, d.m, d.n});
    for (int i = 0; i < d.b; ++i) {
        CMapRM am(av.data() + static_cast<size_t>(i) * d.m * d.k, d.m, d.k);
        CMapRM bm(bv.data() + static_cast<size_t>(i) * d.k * d.n, d.k, d.n);
        MapRM ym(y.data() + static_cast<size_t>(i) * d.m * d.n, d.m, d.n);
        ym.noalias() = am * bm;
    }
    bool ra = t.requires_grad(a.index()), rb = t.requires_grad(b.index());
    int ai = a.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (ra || rb) {
        bw = [ai, bi, ra, rb, d](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            for (int i = 0; i < d.b; ++i) {
                CMapRM gm(g.data() + static_cast<size_t>(i) * d.m * d.n, d.m, d.n);
                if (ra) {
                    CMapRM bm(tp.val(bi).data() + static_cast<size_t>(i) * d.k * d.n, d.k, d.n);
                    MapRM ga(tp.grad_buffer(ai).data() + static_cast<size_t>(i) * d.m * d.k, d.m, d.k);
                    ga.noalias() += gm * bm.transpose();
                }
                if (rb) {
                    CMapRM am(tp.val(ai).data() + static_cast<size_t>(i) * d.m * d.k, d.m, d.k);
                    MapRM gb(tp.grad_buffer(bi).data() + static_cast<size_t>(i) * d.k * d.n, d.k, d.n);
                    gb.noalias() += am.transpose() * gm;
                }
            }
        };
    }
    return t.push(std::move(y), ra || rb, std::move(bw));
}

Var bmm_bt(Var a, Var b) {
    Tape& t = *a.tape();
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2))
        throw ShapeError("bmm_bt: bad shapes");
    BmmDims d{av.dim(0), av.dim(1), av.dim(2), bv.dim(1)};
    Tensor y({d.b, d.m, d.n});
    for (int i = 0; i < d.b; ++i) {
        CMapRM am(av.data() + static_cast<size_t>(i) * d.m * d.k, d.m, d.k);
        CMapRM bm(bv.data() + static_cast<size_t>(i) * d.n * d.k, d.n, d.k);
        MapRM ym(y.data() + static_cast<size_t>(i) * d.m * d.n, d.m, d.n);
        ym.noalias() = am * bm.transpose();
    }
    bool ra = t.requires_grad(a.index()), rb = t.requires_grad(b.index());
    int ai = a.index(), bi = b.index();
    std::function<void(Tape&, int)> bw;
    if (ra || rb) {
        bw = [ai, bi, ra, rb, d](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            for (int i = 0; i < d.b; ++i) {
                CMapRM gm(g.data() + static_cast<size_t>(i) * d.m * d.n, d.m, d.n);
                if (ra) {
                    CMapRM bm(tp.val(bi).data() + static_cast<size_t>(i) * d.n * d.k, d.n, d.k);
                    MapRM ga(tp.grad_buffer(ai).data() + static_cast<size_t>(i) * d.m * d.k, d.m, d.k);
                    ga.noalias() += gm * bm;
                }
                if (rb) {
                    CMapRM am(tp.val(ai).data() + static_cast<size_t>(i) * d.m * d.k, d.m, d.k);
                    MapRM gb(tp.grad_buffer(bi).data() + static_cast<size_t>(i) * d.n * d.k, d.n, d.k);
                    gb.noalias() += gm.transpose() * am;
                }
            }
        };
    }
    return t.push(std::move(y), ra || rb, std::move(bw));
}

Var vchw_to_pvc(Var x) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 4) throw ShapeError("vchw_to_pvc: need 4-d input");
    int v = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor y({hw, v, c});
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < c; ++j) {
            const double* src = xv.data() + (static_cast<size_t>(i) * c + j) * hw;
            for (int p = 0; p < hw; ++p) y[(static_cast<size_t>(p) * v + i) * c + j] = src[p];
        }
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, v, c, hw](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& gx = tp.grad_buffer(xi);
            for (int i = 0; i < v; ++i)
                for (int j = 0; j < c; ++j) {
                    double* dst = gx.data() + (static_cast<size_t>(i) * c + j) * hw;
                    for (int p = 0; p < hw; ++p) dst[p] += g[(static_cast<size_t>(p) * v + i) * c + j];
                }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var pvc_to_vchw(Var x, int h, int w) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 3 || xv.dim(0) != h * w) throw ShapeError("pvc_to_vchw: bad shape");
    int hw = h * w, v = xv.dim(1), c = xv.dim(2);
    Tensor y({v, c, h, w});
    for (int i = 0; i < v; ++i)
        for (int j = 0; j < c; ++j) {
            double* dst = y.data() + (static_cast<size_t>(i) * c + j) * hw;
            for (int p = 0; p < hw; ++p) dst[p] = xv[(static_cast<size_t>(p) * v + i) * c + j];
        }
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, v, c, hw](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            Tensor& gx = tp.grad_buffer(xi);
            for (int i = 0; i < v; ++i)
                for (int j = 0; j < c; ++j) {
                    const double* src = g.data() + (static_cast<size_t>(i) * c + j) * hw;
                    for (int p = 0; p < hw; ++p) gx[(static_cast<size_t>(p) * v + i) * c + j] += src[p];
                }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var normalize_rows(Var x, double eps) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 2) throw ShapeError("normalize_rows: need 2-d input");
    int n = xv.dim(0), k = xv.dim(1);
    Tensor y(xv.shape());
    std::vector<double> inv_r(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* src = xv.data() + static_cast<size_t>(i) * k;
        double s = eps;
        for (int j = 0; j < k; ++j) s += src[j] * src[j];
        double ir = 1.0 / std::sqrt(s);
        inv_r[static_cast<size_t>(i)] = ir;
        double* dst = y.data() + static_cast<size_t>(i) * k;
        for (int j = 0; j < k; ++j) dst[j] = src[j] * ir;
    }
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, n, k, inv_r = std::move(inv_r)](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            const Tensor& xv = tp.val(xi);
            Tensor& gx = tp.grad_buffer(xi);
            for (int i = 0; i < n; ++i) {
                const double* gy = g.data() + static_cast<size_t>(i) * k;
                const double* xr = xv.data() + static_cast<size_t>(i) * k;
                double ir = inv_r[static_cast<size_t>(i)];
                double s = 0.0;
                for (int j = 0; j < k; ++j) s += gy[j] * xr[j];
                s *= ir * ir * ir;
                double* dst = gx.data() + static_cast<size_t>(i) * k;
                for (int j = 0; j < k; ++j) dst[j] += gy[j] * ir - xr[j] * s;
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

Var channel_unit_normalize(Var x, double eps) {
    Tape& t = *x.tape();
    const Tensor& xv = x.val();
    if (xv.ndim() != 4) throw ShapeError("channel_unit_normalize: need 4-d input");
    int n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor y(xv.shape());
    Tensor inv_r({n, xv.dim(2), xv.dim(3)});
    for (int i = 0; i < n; ++i) {
        const double* src = xv.data() + static_cast<size_t>(i) * c * hw;
        double* dst = y.data() + static_cast<size_t>(i) * c * hw;
        double* irp = inv_r.data() + static_cast<size_t>(i) * hw;
        for (int p = 0; p < hw; ++p) {
            double s = eps;
            for (int j = 0; j < c; ++j) {
                double v = src[static_cast<size_t>(j) * hw + p];
                s += v * v;
            }
            double ir = 1.0 / std::sqrt(s);
            irp[p] = ir;
            for (int j = 0; j < c; ++j) dst[static_cast<size_t>(j) * hw + p] = src[static_cast<size_t>(j) * hw + p] * ir;
        }
    }
    bool rg = t.requires_grad(x.index());
    int xi = x.index();
    std::function<void(Tape&, int)> bw;
    if (rg) {
        bw = [xi, n, c, hw, inv_r = std::move(inv_r)](Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            const Tensor& xv = tp.val(xi);
            Tensor& gx = tp.grad_buffer(xi);
            for (int i = 0; i < n; ++i) {
                const double* gy = g.data() + static_cast<size_t>(i) * c * hw;
                const double* xr = xv.data() + static_cast<size_t>(i) * c * hw;
                const double* irp = inv_r.data() + static_cast<size_t>(i) * hw;
                double* dst = gx.data() + static_cast<size_t>(i) * c * hw;
                for (int p = 0; p < hw; ++p) {
                    double ir = irp[p];
                    double s = 0.0;
                    for (int j = 0; j < c; ++j) s += gy[static_cast<size_t>(j) * hw + p] * xr[static_cast<size_t>(j) * hw + p];
                    s *= ir * ir * ir;
                    for (int j = 0; j < c; ++j)
                        dst[static_cast<size_t>(j) * hw + p] += gy[static_cast<size_t>(j) * hw + p] * ir - xr[static_cast<size_t>(j) * hw + p] * s;
                }
            }
        };
    }
    return t.push(std::move(y), rg, std::move(bw));
}

} // namespace gecolab::ad
