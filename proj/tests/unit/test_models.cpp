// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "gecolab/diffusion.hpp"
#include "gecolab/metrics.hpp"
#include "gecolab/models.hpp"
#include "gecolab/nn_ops.hpp"
#include "gecolab/rng.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/splat.hpp"

using namespace gecolab;
namespace fs = std::filesystem;

namespace {

models::NetConfig small_cfg(int views, int res, int width = 8) {
    models::NetConfig c;
    c.width = width;
    c.views = views;
    c.resolution = res;
    c.groups = 4;
    c.cond_channels = 4;
    c.time_dim = 8;
    return c;
}

diffusion::DiffusionSchedule cosine() {
    return diffusion::make_schedule(diffusion::ScheduleKind::Cosine, 1e-3, 0.999);
}

Tensor signed_uniform(RngStream& rng, std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("gecolab_models_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

double max_abs_diff_t(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("denoiser forward shape and finiteness") {
    models::NetConfig cfg = small_cfg(6, 64);
    models::Denoiser teacher = models::make_teacher(cfg, cosine(), 7);
    RngStream rng(11);
    Tensor x = rng.normal_tensor({6, 3, 64, 64});
    Tensor cond = signed_uniform(rng, {3, 64, 64});

    Tensor out = teacher.predict(x, 0.5, &cond);
    CHECK(out.ndim() == 4);
    CHECK(out.dim(0) == 6);
    CHECK(out.dim(1) == 3);
    CHECK(out.dim(2) == 64);
    CHECK(out.dim(3) == 64);
    for (size_t i = 0; i < out.size(); ++i) REQUIRE(std::isfinite(out[i]));

    // Null condition must also produce finite output (unconditional branch).
    Tensor out_null = teacher.predict(x, 0.5, nullptr);
    for (size_t i = 0; i < out_null.size(); ++i) REQUIRE(std::isfinite(out_null[i]));
    CHECK(max_abs_diff_t(out, out_null) > 1e-8);  // condition must matter
    CHECK(teacher.evals == 2);
}

TEST_CASE("view permutation equivariance with zeroed view embedding") {
    models::NetConfig cfg = small_cfg(3, 16);
    ParameterStore params = models::init_net_params(cfg, 21);
    RngStream rng(22);
    Tensor x = rng.normal_tensor({3, 3, 16, 16});
    Tensor cond = signed_uniform(rng, {3, 16, 16});
    const int perm[3] = {2, 0, 1};
    const size_t per = 3 * 16 * 16;
    Tensor xp({3, 3, 16, 16});
    for (int v = 0; v < 3; ++v)
        std::copy_n(x.data() + static_cast<size_t>(perm[v]) * per, per,
                    xp.data() + static_cast<size_t>(v) * per);

    auto forward = [&](const Tensor& input, bool zero_emb) {
        ad::Tape tape;
        ParamBinding pb(tape, params, false);
        return models::net_forward(tape, pb, cfg, tape.constant(input), 0.5,
                                   tape.constant(cond), zero_emb)
            .val();
    };
    Tensor y = forward(x, true);
    Tensor yp = forward(xp, true);
    double worst = 0;
    for (int v = 0; v < 3; ++v)
        for (size_t i = 0; i < per; ++i)
            worst = std::max(worst, std::abs(yp[static_cast<size_t>(v) * per + i] -
                                             y[static_cast<size_t>(perm[v]) * per + i]));
    CHECK(worst < 1e-5);
    INFO("permutation mismatch ", worst);
    CHECK(worst < 1e-9);  // summation reorder only

    // With the learned view embedding the network is view-aware.
    Tensor y2 = forward(x, false);
    Tensor yp2 = forward(xp, false);
    double dev = 0;
    for (int v = 0; v < 3; ++v)
        for (size_t i = 0; i < per; ++i)
            dev = std::max(dev, std::abs(yp2[static_cast<size_t>(v) * per + i] -
                                         y2[static_cast<size_t>(perm[v]) * per + i]));
    CHECK(dev > 1e-8);
}

TEST_CASE("time and condition inputs change the output") {
    models::NetConfig cfg = small_cfg(2, 16);
    models::Denoiser d = models::make_teacher(cfg, cosine(), 31);
    // Time projections start at zero; one optimizer step wakes them up. Until
    // then equal outputs at different t would be a false alarm, so train a few
    // steps first.
    RngStream rng(32);
    Tensor views = signed_uniform(rng, {2, 3, 16, 16});
    Tensor cond = signed_uniform(rng, {3, 16, 16});
    Adam opt({1e-3, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 5; ++i) {
        Tensor eps = rng.normal_tensor({2, 3, 16, 16});
        models::teacher_step(d, views, &cond, 0.3 + 0.1 * i, eps, opt);
    }
    Tensor x = rng.normal_tensor({2, 3, 16, 16});
    Tensor a = d.predict(x, 0.2, &cond);
    Tensor b = d.predict(x, 0.9, &cond);
    CHECK(max_abs_diff_t(a, b) > 1e-8);
    CHECK_THROWS_AS(d.predict(x, 0.99999, &cond), ConfigError);  // outside schedule
    CHECK_THROWS_AS(d.predict(x, 0.0, &cond), ConfigError);
}

TEST_CASE("generator init matches teacher one-step denoising exactly") {
    models::NetConfig cfg = small_cfg(2, 16);
    diffusion::DiffusionSchedule sch = cosine();
    models::Denoiser teacher = models::make_teacher(cfg, sch, 41);
    models::Generator gen = models::init_generator_from_teacher(teacher);
    CHECK(gen.t_gen == doctest::Approx(sch.t_max));
    CHECK(gen.params.max_abs_diff_from(teacher.params) == 0.0);

    RngStream rng(42);
    Tensor z = rng.normal_tensor({2, 3, 16, 16});
    Tensor cond = signed_uniform(rng, {3, 16, 16});
    Tensor out = gen.generate(z, cond);

    // Oracle: teacher V prediction at t_gen converted to X0, soft unit clamp.
    Tensor v = teacher.predict(z, gen.t_gen, &cond);
    Tensor x0 = diffusion::convert_prediction(v, diffusion::PredictionKind::V,
                                              diffusion::PredictionKind::X0, z, gen.t_gen, sch);
    ad::Tape tape;
    Tensor ref = ad::soft_clamp_unit(tape.constant(x0)).val();
    CHECK(max_abs_diff_t(out, ref) < 1e-6);

    for (size_t i = 0; i < out.size(); ++i) {
        REQUIRE(out[i] <= 1.0);
        REQUIRE(out[i] >= -1.0);
    }

    Tensor z2 = rng.normal_tensor({2, 3, 16, 16});
    Tensor out2 = gen.generate(z2, cond);
    CHECK(max_abs_diff_t(out, out2) > 1e-8);  // distinct z, distinct samples
    CHECK(gen.evals == 2);
}

TEST_CASE("ray embedding geometry") {
    scene::CameraPose pose = scene::look_at(Vec3(2.4, 0.0, 0.0), Vec3::Zero(),
                                            0.8726646259971648, 32, 32);
    Tensor emb = models::ray_embedding(pose);
    CHECK(emb.dim(0) == 6);
    const size_t hw = 32 * 32;
    for (size_t i = 0; i < hw; ++i) {
        CHECK(emb[0 * hw + i] == doctest::Approx(2.4));
        CHECK(emb[1 * hw + i] == doctest::Approx(0.0));
        CHECK(emb[2 * hw + i] == doctest::Approx(0.0));
        double n = emb[3 * hw + i] * emb[3 * hw + i] + emb[4 * hw + i] * emb[4 * hw + i] +
                   emb[5 * hw + i] * emb[5 * hw + i];
        REQUIRE(n == doctest::Approx(1.0).epsilon(1e-12));
    }
    // Center pixels look along the optical axis.
    Vec3 fwd = pose.forward();
    for (int y = 15; y <= 16; ++y)
        for (int x = 15; x <= 16; ++x) {
            size_t idx = static_cast<size_t>(y) * 32 + x;
            double dot = emb[3 * hw + idx] * fwd[0] + emb[4 * hw + idx] * fwd[1] +
                         emb[5 * hw + idx] * fwd[2];
            CHECK(dot > 0.999);
        }
}

TEST_CASE("reconstructor produces one splatter image per view, plain equals graph") {
    scene::RigParams rp;
    rp.height = 16;
    rp.width = 16;
    scene::CameraRig rig = make_rig("sixview", rp);
    models::NetConfig cfg = small_cfg(6, 16);
    models::Reconstructor recon = models::make_reconstructor(cfg, 51);
    CHECK(recon.cfg.in_channels == 9);
    CHECK(recon.cfg.out_channels == 12);

    scene::SceneSpec spec = scene::sample_scene(515);
    scene::MultiViewImageSet views;
    views.rig = rig;
    views.images = Tensor({6, 3, 16, 16});
    for (int v = 0; v < 6; ++v) {
        Tensor img = scene::ray_trace(spec, rig.poses[static_cast<size_t>(v)]);
        std::copy_n(img.data(), img.size(),
                    views.images.data() + static_cast<size_t>(v) * 3 * 16 * 16);
    }

    std::vector<splat::SplatterImage> splats = recon.reconstruct(views);
    REQUIRE(splats.size() == 6);
    for (int v = 0; v < 6; ++v) {
        splats[static_cast<size_t>(v)].validate();
        CHECK((splats[static_cast<size_t>(v)].camera.position -
               rig.poses[static_cast<size_t>(v)].position)
                  .norm() == 0.0);
    }
    splat::GaussianSet fused = splat::fuse_splatter_images(splats);
    CHECK(fused.size() == 6 * 16 * 16);
    for (const splat::Gaussian& g : fused.gaussians) {
        g.validate();
        // Head bias fixes the initial scales near 0.05.
        for (int k = 0; k < 3; ++k) {
            CHECK(g.scale[k] > 0.02);
            CHECK(g.scale[k] < 0.12);
        }
    }

    ad::Tape tape;
    ParamBinding pb(tape, recon.params, false);
    Tensor packed = recon.reconstruct_var(tape, pb, tape.constant(views.images), rig).val();
    Tensor packed_plain = splat::pack_gaussians(fused);
    CHECK(max_abs_diff_t(packed, packed_plain) < 1e-12);
    CHECK(recon.evals == 2);
}

TEST_CASE("teacher overfits a frozen batch") {
    models::NetConfig cfg = small_cfg(2, 16);
    models::Denoiser teacher = models::make_teacher(cfg, cosine(), 61);
    RngStream rng(62);
    Tensor views = signed_uniform(rng, {2, 3, 16, 16});
    Tensor cond = signed_uniform(rng, {3, 16, 16});
    Tensor eps = rng.normal_tensor({2, 3, 16, 16});
    Adam opt({1e-3, 0.9, 0.999, 1e-8});
    double first = 0, last = 0;
    for (int step = 0; step < 200; ++step) {
        models::StepStats st = models::teacher_step(teacher, views, &cond, 0.5, eps, opt);
        REQUIRE(std::isfinite(st.loss));
        REQUIRE(st.grad_norm >= 0.0);
        if (step == 0) first = st.loss;
        last = st.loss;
    }
    INFO("loss ", first, " -> ", last);
    CHECK(last < first);
    CHECK(last < 0.25 * first);
}

TEST_CASE("reconstructor overfits frozen render targets") {
    scene::RigParams rp;
    rp.height = 16;
    rp.width = 16;
    scene::CameraRig rig = make_rig("sixview", rp);
    models::NetConfig cfg = small_cfg(6, 16);
    models::Reconstructor recon = models::make_reconstructor(cfg, 71);

    scene::SceneSpec spec = scene::sample_scene(99);
    scene::MultiViewImageSet views;
    views.rig = rig;
    views.images = Tensor({6, 3, 16, 16});
    for (int v = 0; v < 6; ++v) {
        Tensor img = scene::ray_trace(spec, rig.poses[static_cast<size_t>(v)]);
        std::copy_n(img.data(), img.size(),
                    views.images.data() + static_cast<size_t>(v) * 3 * 16 * 16);
    }
    std::vector<std::pair<scene::CameraPose, Tensor>> targets;
    for (int v = 0; v < 2; ++v) {
        Tensor gt({3, 16, 16});
        std::copy_n(views.images.data() + static_cast<size_t>(v) * 3 * 16 * 16, gt.size(),
                    gt.data());
        targets.emplace_back(rig.poses[static_cast<size_t>(v)], gt);
    }
    metrics::PerceptualNet net;
    splat::RasterConfig raster;
    Adam opt({1e-3, 0.9, 0.999, 1e-8});
    double first = 0, last = 0;
    for (int step = 0; step < 40; ++step) {
        models::StepStats st =
            models::reconstructor_step(recon, views, targets, net, 0.0, raster, opt);
        REQUIRE(std::isfinite(st.loss));
        if (step == 0) {
            first = st.loss;
            CHECK(st.grad_norm > 0.0);
        }
        last = st.loss;
    }
    INFO("recon loss ", first, " -> ", last);
    CHECK(last < first);

    // Perceptual term engages and stays finite.
    models::StepStats st = models::reconstructor_step(recon, views, targets, net, 1.0, raster, opt);
    CHECK(std::isfinite(st.loss));
    CHECK(st.loss > last);  // adds a non-negative term
}

TEST_CASE("train_teacher runs on a dataset and logs") {
    fs::path dir = fresh_dir("train_teacher");
    scene::RigParams rp;
    rp.height = 16;
    rp.width = 16;
    scene::CameraRig rig = make_rig("sixview", rp);
    scene::DatasetManifest m = scene::build_dataset(2, rig, 606, dir / "data");

    models::NetConfig cfg = small_cfg(6, 16);
    models::Denoiser teacher = models::make_teacher(cfg, cosine(), 81);
    models::TeacherTrainConfig tc;
    tc.steps = 6;
    tc.lr = 1e-3;
    tc.log_every = 2;
    std::vector<nlohmann::json> rows;
    Checkpoint ck = models::train_teacher(m, teacher, tc, [&](const nlohmann::json& j) {
        rows.push_back(j);
    });
    CHECK(rows.size() == 4);  // steps 0,2,4 and final 5
    for (const auto& r : rows) {
        CHECK(r.contains("step"));
        CHECK(r.contains("loss"));
        CHECK(r.contains("grad_norm"));
        CHECK(r.contains("wall_ms"));
    }
    CHECK(ck.header.at("kind") == "denoiser");
    CHECK(ck.header.at("stage") == "teacher");
    CHECK(ck.header.at("config_digest") == cfg.digest());
    CHECK(ck.header.at("metrics").contains("final_loss"));
    fs::remove_all(dir);
}

TEST_CASE("pretrain_reconstructor runs on a dataset") {
    fs::path dir = fresh_dir("pretrain_recon");
    scene::RigParams rp;
    rp.height = 16;
    rp.width = 16;
    scene::CameraRig rig = make_rig("sixview", rp);
    scene::DatasetManifest m = scene::build_dataset(1, rig, 707, dir / "data");

    models::NetConfig cfg = small_cfg(6, 16);
    models::Reconstructor recon = models::make_reconstructor(cfg, 91);
    models::ReconTrainConfig rc;
    rc.steps = 4;
    rc.lr = 1e-3;
    rc.lambda_perceptual = 0.5;
    rc.novel_views_per_step = 1;
    rc.log_every = 1;
    std::vector<nlohmann::json> rows;
    Checkpoint ck = models::pretrain_reconstructor(m, recon, rc, [&](const nlohmann::json& j) {
        rows.push_back(j);
    });
    CHECK(rows.size() == 4);
    CHECK(ck.header.at("kind") == "reconstructor");
    for (const auto& r : rows) REQUIRE(std::isfinite(r.at("loss").get<double>()));
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip, digest refusal, kind refusal") {
    fs::path dir = fresh_dir("checkpoints");
    models::NetConfig cfg = small_cfg(2, 16);
    models::Denoiser teacher = models::make_teacher(cfg, cosine(), 101);
    Checkpoint ck = models::make_denoiser_checkpoint(teacher, "teacher", {"abc123"}, {{"psnr", 30.0}});
    save_checkpoint(ck, dir / "teacher.ckpt");

    models::Denoiser back = models::load_denoiser(dir / "teacher.ckpt");
    CHECK(back.params.max_abs_diff_from(teacher.params) == 0.0);
    CHECK(back.kind == diffusion::PredictionKind::V);
    CHECK(back.schedule.t_max == doctest::Approx(0.999));

    RngStream rng(102);
    Tensor x = rng.normal_tensor({2, 3, 16, 16});
    Tensor cond = signed_uniform(rng, {3, 16, 16});
    CHECK(max_abs_diff_t(back.predict(x, 0.5, &cond), teacher.predict(x, 0.5, &cond)) == 0.0);

    // Tampered embedded config no longer matches the stored digest.
    Checkpoint bad = load_checkpoint(dir / "teacher.ckpt");
    bad.header["config"]["width"] = 16;
    save_checkpoint(bad, dir / "tampered.ckpt");
    CHECK_THROWS_AS(models::load_denoiser(dir / "tampered.ckpt"), ConfigError);
    CHECK_NOTHROW(models::load_denoiser(dir / "tampered.ckpt", true));

    // Kind mismatch is a storage error, not a config error.
    models::Reconstructor recon = models::make_reconstructor(small_cfg(2, 16), 103);
    save_checkpoint(models::make_reconstructor_checkpoint(recon, "reconstructor", {}, {}),
                    dir / "recon.ckpt");
    CHECK_THROWS_AS(models::load_denoiser(dir / "recon.ckpt"), StorageError);
    CHECK_NOTHROW(models::load_reconstructor(dir / "recon.ckpt"));

    // Generator checkpoints carry t_gen.
    models::Generator gen = models::init_generator_from_teacher(teacher);
    save_checkpoint(models::make_generator_checkpoint(gen, "stage1", {"p"}, {}), dir / "gen.ckpt");
    models::Generator gback = models::load_generator(dir / "gen.ckpt");
    CHECK(gback.t_gen == doctest::Approx(gen.t_gen));
    CHECK(gback.params.max_abs_diff_from(gen.params) == 0.0);
    fs::remove_all(dir);
}

TEST_CASE("net config digest is stable and validates") {
    models::NetConfig a = small_cfg(2, 16);
    models::NetConfig b = small_cfg(2, 16);
    CHECK(a.digest() == b.digest());
    b.width = 16;
    CHECK(a.digest() != b.digest());
    CHECK(models::NetConfig::from_json(a.to_json()).digest() == a.digest());

    models::NetConfig bad = a;
    bad.resolution = 18;  // not divisible by 4
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = a;
    bad.width = 6;  // not a multiple of groups=4... 6 % 4 != 0
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = a;
    bad.time_dim = 7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
