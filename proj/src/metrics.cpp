// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gecolab/errors.hpp"
#include "gecolab/nn_ops.hpp"
#include "gecolab/rng.hpp"

namespace gecolab::metrics {

namespace {

void check_pair(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("metric inputs must share a shape");
    if (a.size() == 0) throw ShapeError("metric inputs empty");
}

// Signed [-1,1] to unit [0,1].
double to_unit(double v) { return 0.5 * (v + 1.0); }

} // namespace

double psnr(const Tensor& a, const Tensor& b) {
    check_pair(a, b);
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = to_unit(a[i]) - to_unit(b[i]);
        acc += d * d;
    }
    double mse = acc / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

// 11x11 Gaussian window, sigma 1.5, separable 1-d profile.
constexpr int kWin = 11;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::vector<double> ssim_kernel() {
    std::vector<double> k(kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        double x = i - (kWin - 1) / 2.0;
        k[static_cast<size_t>(i)] = std::exp(-0.5 * x * x / (1.5 * 1.5));
        sum += k[static_cast<size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Valid-mode separable filtering: horizontal then vertical pass.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& k) {
    int wo = w - kWin + 1, ho = h - kWin + 1;
    std::vector<double> tmp(static_cast<size_t>(h) * wo, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) s += k[static_cast<size_t>(i)] * img[static_cast<size_t>(y) * w + x + i];
            tmp[static_cast<size_t>(y) * wo + x] = s;
        }
    std::vector<double> out(static_cast<size_t>(ho) * wo, 0.0);
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) s += k[static_cast<size_t>(i)] * tmp[static_cast<size_t>(y + i) * wo + x];
            out[static_cast<size_t>(y) * wo + x] = s;
        }
    return out;
}

double ssim_channel(const double* a, const double* b, int h, int w) {
    static const std::vector<double> k = ssim_kernel();
    size_t n = static_cast<size_t>(h) * w;
    std::vector<double> ua(n), ub(n), uaa(n), ubb(n), uab(n);
    for (size_t i = 0; i < n; ++i) {
        double x = to_unit(a[i]), y = to_unit(b[i]);
        ua[i] = x;
        ub[i] = y;
        uaa[i] = x * x;
        ubb[i] = y * y;
        uab[i] = x * y;
    }
    auto ma = filter_valid(ua, h, w, k);
    auto mb = filter_valid(ub, h, w, k);
    auto maa = filter_valid(uaa, h, w, k);
    auto mbb = filter_valid(ubb, h, w, k);
    auto mab = filter_valid(uab, h, w, k);
    double acc = 0.0;
    for (size_t i = 0; i < ma.size(); ++i) {
        double va = maa[i] - ma[i] * ma[i];
        double vb = mbb[i] - mb[i] * mb[i];
        double cov = mab[i] - ma[i] * mb[i];
        double num = (2.0 * ma[i] * mb[i] + kSsimC1) * (2.0 * cov + kSsimC2);
        double den = (ma[i] * ma[i] + mb[i] * mb[i] + kSsimC1) * (va + vb + kSsimC2);
        acc += num / den;
    }
    return acc / static_cast<double>(ma.size());
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    check_pair(a, b);
    int ch = 1, h = 0, w = 0;
    if (a.ndim() == 2) {
        h = a.dim(0);
        w = a.dim(1);
    } else if (a.ndim() == 3) {
        ch = a.dim(0);
        h = a.dim(1);
        w = a.dim(2);
    } else {
        throw ShapeError("ssim: need [H,W] or [C,H,W]");
    }
    if (h < kWin || w < kWin) throw ConfigError("ssim: image smaller than 11x11 window");
    double acc = 0.0;
    size_t hw = static_cast<size_t>(h) * w;
    for (int c = 0; c < ch; ++c) acc += ssim_channel(a.data() + c * hw, b.data() + c * hw, h, w);
    return acc / ch;
}

PerceptualNet::PerceptualNet(uint64_t seed) {
    RngStream rng(seed);
    auto conv_init = [&](int cout, int cin) {
        Tensor w({cout, cin, 3, 3});
        rng.fill_normal(w, std::sqrt(2.0 / (cin * 9.0)));
        return w;
    };
    w1_ = conv_init(8, 3);
    b1_ = Tensor({8});
    w2_ = conv_init(16, 8);
    b2_ = Tensor({16});
    w3_ = conv_init(32, 16);
    b3_ = Tensor({32});
}

ad::Var PerceptualNet::features_sq_diff(ad::Tape& t, ad::Var a, const Tensor& bimg) const {
    const Tensor& av = a.val();
    if (av.ndim() != 3 || av.dim(0) != 3) throw ShapeError("perceptual: need [3,H,W]");
    if (!av.same_shape(bimg)) throw ShapeError("perceptual: shape mismatch");
    int h = av.dim(1), w = av.dim(2);
    if (h < 8 || w < 8) throw ConfigError("perceptual: image smaller than 8x8");

    ad::Var w1 = t.constant(w1_), b1 = t.constant(b1_);
    ad::Var w2 = t.constant(w2_), b2 = t.constant(b2_);
    ad::Var w3 = t.constant(w3_), b3 = t.constant(b3_);

    auto pyramid = [&](ad::Var img) {
        ad::Var x = ad::reshape(img, {1, 3, h, w});
        ad::Var f1 = ad::silu(ad::conv2d(x, w1, b1, 1, 1));
        ad::Var f2 = ad::silu(ad::conv2d(f1, w2, b2, 2, 1));
        ad::Var f3 = ad::silu(ad::conv2d(f2, w3, b3, 2, 1));
        return std::array<ad::Var, 3>{ad::channel_unit_normalize(f1),
                                      ad::channel_unit_normalize(f2),
                                      ad::channel_unit_normalize(f3)};
    };
    auto fa = pyramid(a);
    auto fb = pyramid(t.constant(bimg));
    ad::Var acc = ad::mean_all(ad::square(ad::sub(fa[0], fb[0])));
    acc = ad::add(acc, ad::mean_all(ad::square(ad::sub(fa[1], fb[1]))));
    acc = ad::add(acc, ad::mean_all(ad::square(ad::sub(fa[2], fb[2]))));
    return ad::scale(acc, 1.0 / 3.0);
}

ad::Var PerceptualNet::distance_var(ad::Tape& tape, ad::Var a, const Tensor& b) const {
    return features_sq_diff(tape, a, b);
}

double PerceptualNet::distance(const Tensor& a, const Tensor& b) const {
    ad::Tape t;
    return features_sq_diff(t, t.constant(a), b).val()[0];
}

double perceptual(const Tensor& a, const Tensor& b) {
    static const PerceptualNet net;
    return net.distance(a, b);
}

void MetricsReport::finalize() {
    SceneMetrics agg;
    if (per_scene.empty()) {
        aggregate = agg;
        return;
    }
    bool any_finite = false;
    for (const auto& [id, m] : per_scene) {
        if (!m.identical) {
            agg.psnr += m.psnr;
            any_finite = true;
        }
        agg.ssim += m.ssim;
        agg.perceptual += m.perceptual;
    }
    int n = static_cast<int>(per_scene.size());
    int n_finite = 0;
    for (const auto& [id, m] : per_scene)
        if (!m.identical) ++n_finite;
    agg.psnr = any_finite ? agg.psnr / n_finite : std::numeric_limits<double>::infinity();
    agg.identical = !any_finite;
    agg.ssim /= n;
    agg.perceptual /= n;
    aggregate = agg;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json per;
    for (const auto& [id, m] : per_scene) {
        per[id] = {{"psnr", m.identical ? -1.0 : m.psnr},
                   {"identical", m.identical},
                   {"ssim", m.ssim},
                   {"perceptual", m.perceptual}};
    }
    return {{"schema_version", schema_version},
            {"protocol", protocol},
            {"per_scene", per},
            {"aggregate",
             {{"psnr", aggregate.identical ? -1.0 : aggregate.psnr},
              {"identical", aggregate.identical},
              {"ssim", aggregate.ssim},
              {"perceptual", aggregate.perceptual}}},
            {"runtime_ms",
             {{"multiview", t_multiview_ms}, {"reconstruct", t_reconstruct_ms}}}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.schema_version = j.at("schema_version").get<int>();
    r.protocol = j.at("protocol").get<std::string>();
    for (const auto& [id, m] : j.at("per_scene").items()) {
        SceneMetrics sm;
        sm.identical = m.at("identical").get<bool>();
        sm.psnr = sm.identical ? std::numeric_limits<double>::infinity()
                               : m.at("psnr").get<double>();
        sm.ssim = m.at("ssim").get<double>();
        sm.perceptual = m.at("perceptual").get<double>();
        r.per_scene[id] = sm;
    }
    r.t_multiview_ms = j.at("runtime_ms").at("multiview").get<double>();
    r.t_reconstruct_ms = j.at("runtime_ms").at("reconstruct").get<double>();
    r.finalize();
    return r;
}

std::string MetricsReport::table() const {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    os << "scene            psnr      ssim    perceptual\n";
    auto row = [&](const std::string& id, const SceneMetrics& m) {
        os << id;
        for (size_t i = id.size(); i < 14; ++i) os << ' ';
        if (m.identical)
            os << "     inf";
        else
            os << ' ' << m.psnr;
        os << "   " << m.ssim << "   " << m.perceptual << "\n";
    };
    for (const auto& [id, m] : per_scene) row(id, m);
    row("mean", aggregate);
    return os.str();
}

MetricsReport evaluate(const ScenePredictor& predict, const scene::DatasetManifest& data,
                       const std::string& protocol, const PerceptualNet& net) {
    scene::RigParams rp;
    rp.height = data.rig.poses.at(0).height;
    rp.width = data.rig.poses.at(0).width;
    rp.fov_y = data.rig.poses.at(0).fov_y;
    scene::CameraRig rig;
    if (protocol == "sixview") {
        rig = data.rig;
    } else if (protocol == "ring15") {
        rp.count = 15;
        rig = scene::make_rig("ring", rp);
    } else {
        throw ConfigError("evaluate: unknown protocol " + protocol);
    }

    MetricsReport report;
    report.protocol = protocol;
    for (int s = 0; s < data.n_scenes; ++s) {
        scene::SceneData sd = scene::load_scene_data(data, s);
        scene::SceneSpec spec = scene::sample_scene(data.scene_seeds.at(static_cast<size_t>(s)));
        Tensor pred = predict(sd.condition, data.scene_seeds.at(static_cast<size_t>(s)), rig);
        if (pred.ndim() != 4 || pred.dim(0) != rig.size())
            throw ShapeError("evaluate: predictor returned wrong view count");
        SceneMetrics sm;
        int v_count = rig.size();
        size_t stride = pred.size() / static_cast<size_t>(v_count);
        double acc_psnr = 0, acc_ssim = 0, acc_per = 0;
        int n_finite = 0;
        for (int v = 0; v < v_count; ++v) {
            Tensor gt = scene::ray_trace(spec, rig.poses[static_cast<size_t>(v)]);
            Tensor pv({3, rp.height, rp.width});
            std::copy_n(pred.data() + static_cast<size_t>(v) * stride, stride, pv.data());
            double p = psnr(pv, gt);
            if (std::isfinite(p)) {
                acc_psnr += p;
                ++n_finite;
            }
            acc_ssim += ssim(pv, gt);
            acc_per += net.distance(pv, gt);
        }
        sm.identical = n_finite == 0;
        sm.psnr = sm.identical ? std::numeric_limits<double>::infinity() : acc_psnr / n_finite;
        sm.ssim = acc_ssim / v_count;
        sm.perceptual = acc_per / v_count;
        report.per_scene[data.scene_ids.at(static_cast<size_t>(s))] = sm;
    }
    report.finalize();
    return report;
}

nlohmann::json compare_runs(const std::vector<std::pair<std::string, MetricsReport>>& runs) {
    if (runs.empty()) throw ConfigError("compare_runs: no runs");
    const MetricsReport& base = runs[0].second;
    for (const auto& [name, r] : runs) {
        if (r.protocol != base.protocol) throw ConfigError("compare_runs: protocol mismatch");
        if (r.per_scene.size() != base.per_scene.size())
            throw ConfigError("compare_runs: scene set mismatch");
        for (const auto& [id, m] : base.per_scene)
            if (r.per_scene.find(id) == r.per_scene.end())
                throw ConfigError("compare_runs: scene set mismatch: " + id);
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [name, r] : runs) {
        rows.push_back({{"name", name},
                        {"psnr", r.aggregate.identical ? -1.0 : r.aggregate.psnr},
                        {"ssim", r.aggregate.ssim},
                        {"perceptual", r.aggregate.perceptual},
                        {"delta_psnr", r.aggregate.psnr - base.aggregate.psnr},
                        {"delta_ssim", r.aggregate.ssim - base.aggregate.ssim},
                        {"delta_perceptual", r.aggregate.perceptual - base.aggregate.perceptual}});
    }
    return {{"protocol", base.protocol}, {"rows", rows}};
}

DiversityStats diversity_stats(
    const std::function<Tensor(uint64_t z_seed, const scene::CameraPose& pose)>& render,
    const std::vector<uint64_t>& z_seeds, const std::vector<scene::CameraPose>& poses) {
    if (z_seeds.size() < 2) throw ConfigError("diversity_stats: need >= 2 seeds");
    if (poses.empty()) throw ConfigError("diversity_stats: need >= 1 pose");
    DiversityStats out;
    for (const auto& pose : poses) {
        std::vector<Tensor> renders;
        renders.reserve(z_seeds.size());
        for (uint64_t s : z_seeds) renders.push_back(render(s, pose));
        double acc = 0.0;
        int pairs = 0;
        for (size_t i = 0; i < renders.size(); ++i)
            for (size_t j = i + 1; j < renders.size(); ++j) {
                if (!renders[i].same_shape(renders[j]))
                    throw ShapeError("diversity_stats: render shape mismatch");
                double d = 0.0;
                for (size_t k = 0; k < renders[i].size(); ++k) {
                    double e = renders[i][k] - renders[j][k];
                    d += e * e;
                }
                acc += std::sqrt(d / static_cast<double>(renders[i].size()));
                ++pairs;
            }
        out.per_pose.push_back(acc / pairs);
    }
    double m = 0.0;
    for (double v : out.per_pose) m += v;
    out.mean_pairwise_l2 = m / static_cast<double>(out.per_pose.size());
    return out;
}

} // namespace gecolab::metrics
