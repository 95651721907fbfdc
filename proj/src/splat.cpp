// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/splat.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gecolab/errors.hpp"
#include "gecolab/nn_ops.hpp"

namespace gecolab::splat {

namespace {

std::atomic<int> g_skip_warnings{0};

constexpr double kOpacityFloor = 1e-4;
constexpr double kOpacityCeil = 1.0 - 1e-4;
constexpr double kLogScaleMin = -11.512925464970229;  // log(1e-5)
constexpr double kLogScaleMax = 2.302585092994046;    // log(10)

} // namespace

int raster_skip_warnings() { return g_skip_warnings.load(); }
void reset_raster_skip_warnings() { g_skip_warnings.store(0); }

void Gaussian::validate() const {
    if (std::abs(rotation.norm() - 1.0) > 1e-6) throw NumericError("gaussian quaternion not unit");
    if (scale.minCoeff() < 1e-5 - 1e-12 || scale.maxCoeff() > 10.0 + 1e-12)
        throw NumericError("gaussian scale outside [1e-5, 10]");
    if (opacity < 0.0 || opacity > 1.0) throw NumericError("gaussian opacity outside [0,1]");
    if (color.minCoeff() < 0.0 || color.maxCoeff() > 1.0)
        throw NumericError("gaussian color outside [0,1]");
    if (!position.allFinite()) throw NumericError("gaussian position not finite");
}

void GaussianSet::validate() const {
    if (gaussians.empty()) throw ConfigError("gaussian set is empty");
    for (const auto& g : gaussians) g.validate();
}

Tensor pack_gaussians(const GaussianSet& set) {
    Tensor p({static_cast<int>(set.size()), kPackedFields});
    for (size_t i = 0; i < set.size(); ++i) {
        const Gaussian& g = set.gaussians[i];
        double* row = p.data() + i * kPackedFields;
        for (int k = 0; k < 3; ++k) row[k] = g.position[k];
        for (int k = 0; k < 3; ++k) row[3 + k] = g.scale[k];
        for (int k = 0; k < 4; ++k) row[6 + k] = g.rotation[k];
        row[10] = g.opacity;
        for (int k = 0; k < 3; ++k) row[11 + k] = g.color[k];
    }
    return p;
}

GaussianSet unpack_gaussians(const Tensor& packed, GaussianSource source) {
    if (packed.ndim() != 2 || packed.dim(1) != kPackedFields)
        throw ShapeError("unpack_gaussians: need [N,14]");
    GaussianSet set;
    set.source = source;
    set.gaussians.resize(static_cast<size_t>(packed.dim(0)));
    for (size_t i = 0; i < set.gaussians.size(); ++i) {
        const double* row = packed.data() + i * kPackedFields;
        Gaussian& g = set.gaussians[i];
        g.position = Vec3(row[0], row[1], row[2]);
        g.scale = Vec3(row[3], row[4], row[5]);
        g.rotation = Vec4(row[6], row[7], row[8], row[9]);
        g.opacity = row[10];
        g.color = Vec3(row[11], row[12], row[13]);
    }
    return set;
}

void SplatterImage::validate() const {
    if (raw.ndim() != 3 || raw.dim(0) != kRawChannels)
        throw ShapeError("splatter raw grid must be [12,H,W]");
    if (raw.dim(1) != camera.height || raw.dim(2) != camera.width)
        throw ShapeError("splatter grid resolution != camera resolution");
    if (!raw.all_finite()) throw NumericError("splatter raw grid has non-finite values");
}

namespace {

double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

} // namespace

std::vector<Gaussian> activate_splatter(const SplatterImage& s) {
    s.validate();
    int h = s.camera.height, w = s.camera.width;
    size_t hw = static_cast<size_t>(h) * w;
    double d0 = s.camera.position.norm();
    std::vector<Gaussian> out(hw);
    const double* raw = s.raw.data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            size_t cell = static_cast<size_t>(y) * w + x;
            Vec3 o, dir;
            s.camera.pixel_ray(x, y, o, dir);
            auto ch = [&](int c) { return raw[static_cast<size_t>(c) * hw + cell]; };
            Gaussian& g = out[cell];
            g.position = o + dir * (d0 + softplus_scalar(ch(0)));
            for (int k = 0; k < 3; ++k)
                g.scale[k] = std::exp(std::clamp(ch(1 + k), kLogScaleMin, kLogScaleMax));
            Vec4 q(ch(4), ch(5), ch(6), ch(7));
            g.rotation = q / std::sqrt(q.squaredNorm() + 1e-12);
            g.opacity = sigmoid_scalar(ch(8));
            for (int k = 0; k < 3; ++k) g.color[k] = sigmoid_scalar(ch(9 + k));
        }
    }
    return out;
}

ad::Var activate_splatter_var(ad::Var raw_grid, const scene::CameraPose& camera) {
    const Tensor& rv = raw_grid.val();
    if (rv.ndim() != 3 || rv.dim(0) != kRawChannels) throw ShapeError("activate_splatter_var: need [12,H,W]");
    int h = rv.dim(1), w = rv.dim(2);
    if (h != camera.height || w != camera.width)
        throw ShapeError("activate_splatter_var: grid resolution != camera resolution");
    int n = h * w;
    double d0 = camera.position.norm();

    Tensor dirs({n, 3}), origins({n, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Vec3 o, dir;
            camera.pixel_ray(x, y, o, dir);
            size_t cell = static_cast<size_t>(y) * w + x;
            for (int k = 0; k < 3; ++k) {
                dirs[cell * 3 + k] = dir[k];
                origins[cell * 3 + k] = o[k];
            }
        }

    ad::Var g2 = ad::reshape(ad::vchw_to_pvc(ad::reshape(raw_grid, {1, kRawChannels, h, w})),
                             {n, kRawChannels});
    ad::Var dist = ad::add_scalar(ad::softplus(ad::slice_cols(g2, 0, 1)), d0);
    ad::Var pos = ad::add_const(ad::rows_scale(dist, dirs), origins);
    ad::Var scale = ad::exp_clamped(ad::slice_cols(g2, 1, 4), kLogScaleMin, kLogScaleMax);
    ad::Var quat = ad::normalize_rows(ad::slice_cols(g2, 4, 8));
    ad::Var opac = ad::sigmoid(ad::slice_cols(g2, 8, 9));
    ad::Var color = ad::sigmoid(ad::slice_cols(g2, 9, 12));
    return ad::concat_cols({pos, scale, quat, opac, color});
}

GaussianSet fuse_splatter_images(const std::vector<SplatterImage>& splats) {
    if (splats.empty()) throw ConfigError("fuse_splatter_images: empty input");
    GaussianSet set;
    set.source = GaussianSource::Fused;
    for (const auto& s : splats) {
        std::vector<Gaussian> g = activate_splatter(s);
        set.gaussians.insert(set.gaussians.end(), g.begin(), g.end());
    }
    return set;
}

namespace {

// Full projection record, carrying what the backward pass needs.
struct ProjFull {
    bool ok = false;
    double px = 0, py = 0;       // camera-space x, y
    double pz = 0;               // camera-space depth
    double mx = 0, my = 0;       // projected mean, pixels
    double a = 0, b = 0, c = 0;  // 2x2 cov after regularization
    double ia = 0, ib = 0, ic = 0;  // inverse cov
    double radius = 0;           // pixel-space cut bound
    double qnorm = 0;            // |raw quaternion|
    Vec4 qn = Vec4(1, 0, 0, 0);  // normalized quaternion
    Mat3 rot = Mat3::Identity(); // rotation of qn
    Mat3 acam = Mat3::Zero();    // W Sigma3 W^T
};

ProjFull project_packed(const double* row, const scene::CameraPose& pose,
                        const RasterConfig& cfg) {
    ProjFull pr;
    Vec3 p(row[0], row[1], row[2]);
    Vec3 s(row[3], row[4], row[5]);
    Vec4 q(row[6], row[7], row[8], row[9]);
    pr.qnorm = q.norm();
    if (!(pr.qnorm > 1e-9) || !p.allFinite() || !s.allFinite()) {
        g_skip_warnings.fetch_add(1);
        return pr;
    }
    pr.qn = q / pr.qnorm;
    pr.rot = quat_to_mat(pr.qn);

    Vec3 pc = pose.rotation * (p - pose.position);
    if (pc.z() <= cfg.near_plane) return pr;  // culled, no warning
    pr.px = pc.x();
    pr.py = pc.y();
    pr.pz = pc.z();

    Mat3 sigma3 = pr.rot * Vec3(s.array().square()).asDiagonal() * pr.rot.transpose();
    pr.acam = pose.rotation * sigma3 * pose.rotation.transpose();

    double f = pose.focal_px();
    double z = pc.z(), iz = 1.0 / z;
    // J = d(mean2d)/d(p_cam), rows (mx; my).
    Eigen::Matrix<double, 2, 3> J;
    J << f * iz, 0, -f * pc.x() * iz * iz, 0, -f * iz, f * pc.y() * iz * iz;
    Eigen::Matrix2d cov = J * pr.acam * J.transpose();
    pr.a = cov(0, 0) + cfg.cov_reg;
    pr.b = cov(0, 1);
    pr.c = cov(1, 1) + cfg.cov_reg;
    double det = pr.a * pr.c - pr.b * pr.b;
    if (!(det > 1e-12) || !std::isfinite(det)) {
        g_skip_warnings.fetch_add(1);
        return pr;
    }
    pr.ia = pr.c / det;
    pr.ib = -pr.b / det;
    pr.ic = pr.a / det;
    pr.mx = 0.5 * pose.width - 0.5 + f * pc.x() * iz;
    pr.my = 0.5 * pose.height - 0.5 - f * pc.y() * iz;
    double half = 0.5 * (pr.a + pr.c);
    double lam_max = half + std::sqrt(std::max(0.0, half * half - det));
    pr.radius = cfg.cut_sigma * std::sqrt(lam_max);
    pr.ok = true;
    return pr;
}

struct RasterPrep {
    std::vector<ProjFull> proj;
    std::vector<int> order;                  // front-to-back among ok Gaussians
    std::vector<std::vector<int>> pixel_lists;  // per pixel, already depth-ordered
};

RasterPrep prepare(const Tensor& packed, const scene::CameraPose& pose, const RasterConfig& cfg) {
    int n = packed.dim(0);
    int h = pose.height, w = pose.width;
    RasterPrep prep;
    prep.proj.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        prep.proj[static_cast<size_t>(i)] =
            project_packed(packed.data() + static_cast<size_t>(i) * kPackedFields, pose, cfg);
    for (int i = 0; i < n; ++i)
        if (prep.proj[static_cast<size_t>(i)].ok) prep.order.push_back(i);
    std::stable_sort(prep.order.begin(), prep.order.end(), [&](int x, int y) {
        return prep.proj[static_cast<size_t>(x)].pz < prep.proj[static_cast<size_t>(y)].pz;
    });
    prep.pixel_lists.assign(static_cast<size_t>(h) * w, {});
    for (int idx : prep.order) {
        const ProjFull& pr = prep.proj[static_cast<size_t>(idx)];
        int x0 = std::max(0, static_cast<int>(std::ceil(pr.mx - pr.radius)));
        int x1 = std::min(w - 1, static_cast<int>(std::floor(pr.mx + pr.radius)));
        int y0 = std::max(0, static_cast<int>(std::ceil(pr.my - pr.radius)));
        int y1 = std::min(h - 1, static_cast<int>(std::floor(pr.my + pr.radius)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                prep.pixel_lists[static_cast<size_t>(y) * w + x].push_back(idx);
    }
    return prep;
}

// Forward compositing into out4 [4,H,W]: rgb signed, then alpha.
void composite_forward(const Tensor& packed, const scene::CameraPose& pose,
                       const RasterConfig& cfg, const RasterPrep& prep, Tensor& out4) {
    int h = pose.height, w = pose.width;
    size_t hw = static_cast<size_t>(h) * w;
    double cut2 = cfg.cut_sigma * cfg.cut_sigma;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            size_t pix = static_cast<size_t>(y) * w + x;
            double T = 1.0, r = 0.0, g = 0.0, b = 0.0;
            for (int idx : prep.pixel_lists[pix]) {
                const ProjFull& pr = prep.proj[static_cast<size_t>(idx)];
                double dx = x - pr.mx, dy = y - pr.my;
                double q = pr.ia * dx * dx + 2.0 * pr.ib * dx * dy + pr.ic * dy * dy;
                if (q > cut2) continue;
                const double* row = packed.data() + static_cast<size_t>(idx) * kPackedFields;
                double oeff = std::clamp(row[10], kOpacityFloor, kOpacityCeil);
                double wgt = oeff * std::exp(-0.5 * q);
                r += row[11] * wgt * T;
                g += row[12] * wgt * T;
                b += row[13] * wgt * T;
                T *= 1.0 - wgt;
            }
            out4[0 * hw + pix] = 2.0 * (r + T * cfg.bg_unit) - 1.0;
            out4[1 * hw + pix] = 2.0 * (g + T * cfg.bg_unit) - 1.0;
            out4[2 * hw + pix] = 2.0 * (b + T * cfg.bg_unit) - 1.0;
            out4[3 * hw + pix] = 1.0 - T;
        }
    }
}

// Hand-derived backward: given upstream grad on out4, accumulates into
// gpacked [N,14].
void composite_backward(const Tensor& packed, const scene::CameraPose& pose,
                        const RasterConfig& cfg, const RasterPrep& prep, const Tensor& gout,
                        Tensor& gpacked) {
    int h = pose.height, w = pose.width;
    size_t hw = static_cast<size_t>(h) * w;
    int n = packed.dim(0);
    double cut2 = cfg.cut_sigma * cfg.cut_sigma;
    double f = pose.focal_px();

    // Pixel-loop accumulators per Gaussian.
    std::vector<double> g_mx(static_cast<size_t>(n), 0.0), g_my(static_cast<size_t>(n), 0.0);
    std::vector<double> g_m00(static_cast<size_t>(n), 0.0), g_m01(static_cast<size_t>(n), 0.0),
        g_m11(static_cast<size_t>(n), 0.0);

    struct Contrib {
        int idx;
        double wgt, gexp, dx, dy, q, T;
        bool interior;
    };
    std::vector<Contrib> stack;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            size_t pix = static_cast<size_t>(y) * w + x;
            const auto& list = prep.pixel_lists[pix];
            if (list.empty()) continue;
            double gP[3] = {2.0 * gout[0 * hw + pix], 2.0 * gout[1 * hw + pix],
                            2.0 * gout[2 * hw + pix]};
            double g_alpha = gout[3 * hw + pix];
            if (gP[0] == 0 && gP[1] == 0 && gP[2] == 0 && g_alpha == 0) continue;

            stack.clear();
            double T = 1.0;
            for (int idx : list) {
                const ProjFull& pr = prep.proj[static_cast<size_t>(idx)];
                double dx = x - pr.mx, dy = y - pr.my;
                double q = pr.ia * dx * dx + 2.0 * pr.ib * dx * dy + pr.ic * dy * dy;
                if (q > cut2) continue;
                const double* row = packed.data() + static_cast<size_t>(idx) * kPackedFields;
                bool interior = row[10] > kOpacityFloor && row[10] < kOpacityCeil;
                double oeff = std::clamp(row[10], kOpacityFloor, kOpacityCeil);
                double gexp = std::exp(-0.5 * q);
                double wgt = oeff * gexp;
                stack.push_back({idx, wgt, gexp, dx, dy, q, T, interior});
                T *= 1.0 - wgt;
            }
            double t_final = T;
            // Suffix color (unit space) including the background term.
            double S[3] = {t_final * cfg.bg_unit, t_final * cfg.bg_unit, t_final * cfg.bg_unit};
            for (size_t k = stack.size(); k-- > 0;) {
                const Contrib& cb = stack[k];
                const double* row = packed.data() + static_cast<size_t>(cb.idx) * kPackedFields;
                double* grow = gpacked.data() + static_cast<size_t>(cb.idx) * kPackedFields;
                double inv1w = 1.0 / (1.0 - cb.wgt);
                double gw = g_alpha * t_final * inv1w;
                for (int ch = 0; ch < 3; ++ch) {
                    gw += gP[ch] * (row[11 + ch] * cb.T - S[ch] * inv1w);
                    grow[11 + ch] += gP[ch] * cb.wgt * cb.T;  // color grad
                }
                if (cb.interior) grow[10] += gw * cb.gexp;  // opacity grad
                double gq = -0.5 * gw * cb.wgt;
                const ProjFull& pr = prep.proj[static_cast<size_t>(cb.idx)];
                // q = ia dx^2 + 2 ib dx dy + ic dy^2, d* = pixel - mean.
                g_mx[static_cast<size_t>(cb.idx)] -= gq * (2.0 * pr.ia * cb.dx + 2.0 * pr.ib * cb.dy);
                g_my[static_cast<size_t>(cb.idx)] -= gq * (2.0 * pr.ib * cb.dx + 2.0 * pr.ic * cb.dy);
                // Full-matrix gradient w.r.t. inverse covariance M.
                g_m00[static_cast<size_t>(cb.idx)] += gq * cb.dx * cb.dx;
                g_m01[static_cast<size_t>(cb.idx)] += gq * cb.dx * cb.dy;
                g_m11[static_cast<size_t>(cb.idx)] += gq * cb.dy * cb.dy;
                for (int ch = 0; ch < 3; ++ch) S[ch] += row[11 + ch] * cb.wgt * cb.T;
            }
        }
    }

    // Per-Gaussian chain to 3D parameters.
    for (int i = 0; i < n; ++i) {
        const ProjFull& pr = prep.proj[static_cast<size_t>(i)];
        if (!pr.ok) continue;
        size_t si = static_cast<size_t>(i);
        if (g_mx[si] == 0 && g_my[si] == 0 && g_m00[si] == 0 && g_m01[si] == 0 && g_m11[si] == 0)
            continue;
        const double* row = packed.data() + si * kPackedFields;
        double* grow = gpacked.data() + si * kPackedFields;

        // d(inverse) -> d(cov2d): G_C = -M G_M M with symmetric M, G_M.
        Eigen::Matrix2d M;
        M << pr.ia, pr.ib, pr.ib, pr.ic;
        Eigen::Matrix2d GM;
        GM << g_m00[si], g_m01[si], g_m01[si], g_m11[si];
        Eigen::Matrix2d GC = -M * GM * M;

        double z = pr.pz, iz = 1.0 / z;
        Eigen::Matrix<double, 2, 3> J;
        J << f * iz, 0, -f * pr.px * iz * iz, 0, -f * iz, f * pr.py * iz * iz;

        // cov2d = J A J^T: gradients to A and (position-dependent) J.
        Mat3 GA = J.transpose() * GC * J;
        Eigen::Matrix<double, 2, 3> GJ = 2.0 * GC * J * pr.acam;

        // Mean path + J path into camera-space position.
        Eigen::Vector2d gmean(g_mx[si], g_my[si]);
        Vec3 g_pcam = J.transpose() * gmean;
        double iz2 = iz * iz, iz3 = iz2 * iz;
        g_pcam.x() += GJ(0, 2) * (-f * iz2);
        g_pcam.y() += GJ(1, 2) * (f * iz2);
        g_pcam.z() += GJ(0, 0) * (-f * iz2) + GJ(0, 2) * (2.0 * f * pr.px * iz3) +
                      GJ(1, 1) * (f * iz2) + GJ(1, 2) * (-2.0 * f * pr.py * iz3);
        Vec3 g_pos = pose.rotation.transpose() * g_pcam;
        for (int k = 0; k < 3; ++k) grow[k] += g_pos[k];

        // A = W Sigma3 W^T -> Sigma3 = R D R^T.
        Mat3 GS = pose.rotation.transpose() * GA * pose.rotation;
        Vec3 s(row[3], row[4], row[5]);
        Mat3 RtGR = pr.rot.transpose() * GS * pr.rot;
        for (int k = 0; k < 3; ++k) grow[3 + k] += RtGR(k, k) * 2.0 * s[k];

        Mat3 GR = 2.0 * GS * pr.rot * Vec3(s.array().square()).asDiagonal();

        // dR/dq at the normalized quaternion (wxyz).
        double qw = pr.qn[0], qx = pr.qn[1], qy = pr.qn[2], qz = pr.qn[3];
        Mat3 dRdq[4];
        dRdq[0] << 0, -2 * qz, 2 * qy, 2 * qz, 0, -2 * qx, -2 * qy, 2 * qx, 0;
        dRdq[1] << 0, 2 * qy, 2 * qz, 2 * qy, -4 * qx, -2 * qw, 2 * qz, 2 * qw, -4 * qx;
        dRdq[2] << -4 * qy, 2 * qx, 2 * qw, 2 * qx, 0, 2 * qz, -2 * qw, 2 * qz, -4 * qy;
        dRdq[3] << -4 * qz, -2 * qw, 2 * qx, 2 * qw, -4 * qz, 2 * qy, 2 * qx, 2 * qy, 0;
        Vec4 g_qn;
        for (int k = 0; k < 4; ++k) g_qn[k] = (GR.array() * dRdq[k].array()).sum();
        // Through normalization: g_q = (g_qn - qn (qn . g_qn)) / |q|.
        Vec4 g_q = (g_qn - pr.qn * pr.qn.dot(g_qn)) / pr.qnorm;
        for (int k = 0; k < 4; ++k) grow[6 + k] += g_q[k];
    }
}

} // namespace

std::optional<Projection> project_gaussian(const Gaussian& g, const scene::CameraPose& pose,
                                           const RasterConfig& cfg) {
    GaussianSet one;
    one.gaussians.push_back(g);
    Tensor packed = pack_gaussians(one);
    ProjFull pr = project_packed(packed.data(), pose, cfg);
    if (!pr.ok) return std::nullopt;
    Projection out;
    out.mean_x = pr.mx;
    out.mean_y = pr.my;
    out.depth = pr.pz;
    out.cov_a = pr.a;
    out.cov_b = pr.b;
    out.cov_c = pr.c;
    return out;
}

RasterOutput rasterize(const GaussianSet& set, const scene::CameraPose& pose,
                       const RasterConfig& cfg) {
    set.validate();
    pose.validate();
    Tensor packed = pack_gaussians(set);
    RasterPrep prep = prepare(packed, pose, cfg);
    Tensor out4({4, pose.height, pose.width});
    composite_forward(packed, pose, cfg, prep, out4);
    RasterOutput out;
    out.image = Tensor({3, pose.height, pose.width});
    out.alpha = Tensor({pose.height, pose.width});
    size_t hw = static_cast<size_t>(pose.height) * pose.width;
    std::copy_n(out4.data(), 3 * hw, out.image.data());
    std::copy_n(out4.data() + 3 * hw, hw, out.alpha.data());
    return out;
}

ad::Var rasterize_var(ad::Var packed, const scene::CameraPose& pose, const RasterConfig& cfg) {
    ad::Tape& t = *packed.tape();
    const Tensor& pv = packed.val();
    if (pv.ndim() != 2 || pv.dim(1) != kPackedFields) throw ShapeError("rasterize_var: need [N,14]");
    pose.validate();
    RasterPrep prep = prepare(pv, pose, cfg);
    Tensor out4({4, pose.height, pose.width});
    composite_forward(pv, pose, cfg, prep, out4);

    bool rg = t.requires_grad(packed.index());
    int pi = packed.index();
    std::function<void(ad::Tape&, int)> bw;
    if (rg) {
        bw = [pi, pose, cfg](ad::Tape& tp, int self) {
            const Tensor& g = tp.grad_buffer(self);
            const Tensor& pv = tp.val(pi);
            // Projections are recomputed here; cheap relative to compositing.
            RasterPrep prep = prepare(pv, pose, cfg);
            composite_backward(pv, pose, cfg, prep, g, tp.grad_buffer(pi));
        };
    }
    return t.push(std::move(out4), rg, std::move(bw));
}

void export_gaussians(const GaussianSet& set, const std::filesystem::path& path) {
    set.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw StorageError("cannot open for write: " + path.string());
    os.write("GSPL", 4);
    uint32_t version = 1;
    os.write(reinterpret_cast<const char*>(&version), 4);
    uint64_t count = set.size();
    os.write(reinterpret_cast<const char*>(&count), 8);
    for (const Gaussian& g : set.gaussians) {
        float fields[kPackedFields];
        for (int k = 0; k < 3; ++k) fields[k] = static_cast<float>(g.position[k]);
        for (int k = 0; k < 3; ++k) fields[3 + k] = static_cast<float>(g.scale[k]);
        for (int k = 0; k < 4; ++k) fields[6 + k] = static_cast<float>(g.rotation[k]);
        fields[10] = static_cast<float>(g.opacity);
        for (int k = 0; k < 3; ++k) fields[11 + k] = static_cast<float>(g.color[k]);
        os.write(reinterpret_cast<const char*>(fields), sizeof(fields));
    }
    if (!os) throw StorageError("gaussian export failed: " + path.string());
}

GaussianSet import_gaussians(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StorageError("cannot open gaussian file: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GSPL", 4) != 0) throw StorageError("bad GSPL magic");
    uint32_t version = 0;
    is.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw StorageError("unsupported GSPL version");
    uint64_t count = 0;
    is.read(reinterpret_cast<char*>(&count), 8);
    GaussianSet set;
    set.source = GaussianSource::Loaded;
    set.gaussians.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
        float fields[kPackedFields];
        is.read(reinterpret_cast<char*>(fields), sizeof(fields));
        if (!is) throw StorageError("truncated GSPL file");
        Gaussian& g = set.gaussians[static_cast<size_t>(i)];
        g.position = Vec3(fields[0], fields[1], fields[2]);
        g.scale = Vec3(fields[3], fields[4], fields[5]);
        g.rotation = Vec4(fields[6], fields[7], fields[8], fields[9]);
        g.opacity = fields[10];
        g.color = Vec3(fields[11], fields[12], fields[13]);
    }
    return set;
}

void dump_gaussians_ascii(const GaussianSet& set, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw StorageError("cannot open for write: " + path.string());
    os.precision(9);
    for (const Gaussian& g : set.gaussians) {
        os << g.position.x() << " " << g.position.y() << " " << g.position.z() << " "
           << g.scale.x() << " " << g.scale.y() << " " << g.scale.z() << " " << g.rotation[0]
           << " " << g.rotation[1] << " " << g.rotation[2] << " " << g.rotation[3] << " "
           << g.opacity << " " << g.color.x() << " " << g.color.y() << " " << g.color.z() << "\n";
    }
}

} // namespace gecolab::splat
