// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gecolab/errors.hpp"
#include "gecolab/metrics.hpp"
#include "gecolab/rng.hpp"
#include "gecolab/scene.hpp"

using namespace gecolab;

namespace {

// Scalar-loop PSNR oracle, accumulated in reverse element order.
double psnr_oracle(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t i = a.size(); i-- > 0;) {
        double d = 0.5 * (a[i] + 1.0) - 0.5 * (b[i] + 1.0);
        acc += d * d;
    }
    return 10.0 * std::log10(static_cast<double>(a.size()) / acc);
}

// Naive per-window double-loop SSIM oracle (non-separable 2-d window).
double ssim_oracle(const Tensor& a, const Tensor& b) {
    int ch = a.dim(0), h = a.dim(1), w = a.dim(2);
    double win[11][11];
    double wsum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            double dx = i - 5.0, dy = j - 5.0;
            win[i][j] = std::exp(-0.5 * (dx * dx + dy * dy) / 2.25);
            wsum += win[i][j];
        }
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) win[i][j] /= wsum;

    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    int count = 0;
    size_t hw = static_cast<size_t>(h) * w;
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y + 11 <= h; ++y)
            for (int x = 0; x + 11 <= w; ++x) {
                double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        double av = 0.5 * (a[c * hw + static_cast<size_t>(y + i) * w + x + j] + 1.0);
                        double bv = 0.5 * (b[c * hw + static_cast<size_t>(y + i) * w + x + j] + 1.0);
                        ma += win[i][j] * av;
                        mb += win[i][j] * bv;
                        maa += win[i][j] * av * av;
                        mbb += win[i][j] * bv * bv;
                        mab += win[i][j] * av * bv;
                    }
                double va = maa - ma * ma, vb = mbb - mb * mb, cov = mab - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / count;
}

} // namespace

TEST_CASE("psnr: flagged infinity, exact known value, oracle agreement") {
    RngStream rng(3);
    Tensor a = rng.normal_tensor({3, 16, 16}, 0.3);
    CHECK(std::isinf(metrics::psnr(a, a)));

    Tensor u({3, 16, 16}), v({3, 16, 16});
    for (size_t i = 0; i < u.size(); ++i) {
        u[i] = -1.0;        // 0.0 on [0,1]
        v[i] = -0.8;        // 0.1 on [0,1]
    }
    CHECK(metrics::psnr(u, v) == doctest::Approx(20.0).epsilon(1e-12));

    Tensor b = rng.normal_tensor({3, 16, 16}, 0.3);
    CHECK(metrics::psnr(a, b) == doctest::Approx(psnr_oracle(a, b)).epsilon(1e-9));

    Tensor c({3, 8, 8});
    CHECK_THROWS_AS(metrics::psnr(a, c), ShapeError);
}

TEST_CASE("ssim: self-identity, anticorrelation, windowed oracle") {
    RngStream rng(17);
    Tensor a = rng.normal_tensor({3, 16, 16}, 0.4);
    CHECK(metrics::ssim(a, a) == 1.0);

    // Checkerboard binary image: every window mixes both values.
    Tensor cb({1, 16, 16}), inv({1, 16, 16});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            double v = ((x + y) % 2 == 0) ? 1.0 : -1.0;
            cb[static_cast<size_t>(y) * 16 + x] = v;
            inv[static_cast<size_t>(y) * 16 + x] = -v;
        }
    CHECK(metrics::ssim(cb, inv) <= 0.0);

    Tensor b = rng.normal_tensor({3, 16, 16}, 0.4);
    CHECK(metrics::ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-6));

    Tensor tiny({3, 8, 8});
    CHECK_THROWS_AS(metrics::ssim(tiny, tiny), ConfigError);
}

TEST_CASE("perceptual: identity, symmetry, noise monotonicity") {
    metrics::PerceptualNet net;
    RngStream rng(29);
    Tensor a = rng.normal_tensor({3, 16, 16}, 0.3);
    Tensor b = rng.normal_tensor({3, 16, 16}, 0.3);
    CHECK(net.distance(a, a) == 0.0);
    CHECK(net.distance(a, b) == doctest::Approx(net.distance(b, a)).epsilon(1e-9));
    CHECK(net.distance(a, b) > 0.0);

    int wins = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor eta = rng.normal_tensor({3, 16, 16});
        Tensor n1 = a, n2 = a;
        for (size_t i = 0; i < a.size(); ++i) {
            n1[i] += 0.1 * eta[i];
            n2[i] += 0.2 * eta[i];
        }
        if (net.distance(a, n2) > net.distance(a, n1)) ++wins;
    }
    CHECK(wins == 20);

    // Differentiable path agrees with the plain path.
    ad::Tape t;
    ad::Var d = net.distance_var(t, t.constant(a), b);
    CHECK(d.val()[0] == doctest::Approx(net.distance(a, b)).epsilon(1e-12));
}

TEST_CASE("evaluate: protocols, GT self-evaluation, report round trip") {
    auto dir = std::filesystem::temp_directory_path() / "gecolab_metrics_eval";
    std::filesystem::remove_all(dir);
    scene::RigParams rp;
    rp.height = rp.width = 32;
    scene::CameraRig rig = scene::make_rig("sixview", rp);
    auto manifest = scene::build_dataset(3, rig, 515, dir);

    metrics::PerceptualNet net;
    int calls = 0;
    metrics::ScenePredictor gt_predictor = [&](const Tensor&, uint64_t scene_seed,
                                               const scene::CameraRig& r) {
        ++calls;
        scene::SceneSpec spec = scene::sample_scene(scene_seed);
        Tensor out({r.size(), 3, 32, 32});
        size_t stride = 3 * 32 * 32;
        for (int v = 0; v < r.size(); ++v) {
            Tensor img = scene::ray_trace(spec, r.poses[static_cast<size_t>(v)]);
            std::copy_n(img.data(), stride, out.data() + static_cast<size_t>(v) * stride);
        }
        return out;
    };

    auto ring = metrics::evaluate(gt_predictor, manifest, "ring15", net);
    CHECK(ring.protocol == "ring15");
    CHECK(ring.per_scene.size() == 3);
    for (const auto& [id, m] : ring.per_scene) {
        CHECK(m.identical);
        CHECK(m.ssim == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m.perceptual == doctest::Approx(0.0).epsilon(1e-12));
    }

    auto six = metrics::evaluate(gt_predictor, manifest, "sixview", net);
    CHECK(six.per_scene.size() == 3);

    CHECK_THROWS_AS(metrics::evaluate(gt_predictor, manifest, "octview", net), ConfigError);

    // Report json round trip preserves aggregates.
    auto j = six.to_json();
    auto restored = metrics::MetricsReport::from_json(j);
    CHECK(restored.protocol == six.protocol);
    CHECK(restored.per_scene.size() == six.per_scene.size());
    CHECK(restored.aggregate.ssim == doctest::Approx(six.aggregate.ssim).epsilon(1e-12));
    CHECK(six.table().find("mean") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("compare_runs: self-comparison, multi-run table, mismatch errors") {
    metrics::MetricsReport r1;
    r1.protocol = "ring15";
    r1.per_scene["s0"] = {18.0, 0.8, 0.1, false};
    r1.per_scene["s1"] = {20.0, 0.9, 0.05, false};
    r1.finalize();
    CHECK(r1.aggregate.psnr == doctest::Approx(19.0));

    auto self_cmp = metrics::compare_runs({{"a", r1}, {"a-again", r1}});
    for (const auto& row : self_cmp.at("rows")) {
        CHECK(row.at("delta_psnr").get<double>() == 0.0);
        CHECK(row.at("delta_ssim").get<double>() == 0.0);
    }

    metrics::MetricsReport r2 = r1;
    r2.per_scene["s0"].psnr = 19.0;
    r2.finalize();
    auto cmp = metrics::compare_runs({{"base", r1}, {"better", r2}, {"again", r1}});
    CHECK(cmp.at("rows").size() == 3);
    CHECK(cmp.at("rows")[1].at("delta_psnr").get<double>() == doctest::Approx(0.5));

    metrics::MetricsReport other = r1;
    other.protocol = "sixview";
    CHECK_THROWS_AS(metrics::compare_runs({{"a", r1}, {"b", other}}), ConfigError);
    metrics::MetricsReport missing = r1;
    missing.per_scene.erase("s1");
    CHECK_THROWS_AS(metrics::compare_runs({{"a", r1}, {"b", missing}}), ConfigError);
}

TEST_CASE("diversity_stats: zero for identical renders, positive for distinct") {
    auto pose = scene::look_at(Vec3(2.4, 0, 0), Vec3::Zero(), 0.8726646259971648, 16, 16);
    auto render = [](uint64_t seed, const scene::CameraPose& p) {
        RngStream rng(seed);
        return rng.normal_tensor({3, p.height, p.width}, 0.2);
    };
    auto same = metrics::diversity_stats(render, {7, 7, 7}, {pose});
    CHECK(same.mean_pairwise_l2 == 0.0);

    auto distinct = metrics::diversity_stats(render, {1, 2, 3}, {pose, pose});
    CHECK(distinct.mean_pairwise_l2 > 0.0);
    CHECK(distinct.per_pose.size() == 2);

    CHECK_THROWS_AS(metrics::diversity_stats(render, {1}, {pose}), ConfigError);
}
