// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gecolab/diffusion.hpp"
#include "gecolab/errors.hpp"
#include "gecolab/metrics.hpp"
#include "gecolab/models.hpp"
#include "gecolab/rng.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/splat.hpp"
#include "gecolab/stage2.hpp"

using namespace gecolab;
namespace fs = std::filesystem;

namespace {

diffusion::DiffusionSchedule cosine() {
    return diffusion::make_schedule(diffusion::ScheduleKind::Cosine, 1e-3, 0.999);
}

models::NetConfig tiny_cfg(int views, int res, int in_ch = 3, int out_ch = 3) {
    models::NetConfig cfg;
    cfg.width = 4;
    cfg.groups = 2;
    cfg.views = views;
    cfg.resolution = res;
    cfg.in_channels = in_ch;
    cfg.out_channels = out_ch;
    cfg.cond_channels = 4;
    cfg.time_dim = 8;
    return cfg;
}

scene::CameraRig two_rig(int res) {
    const double fov = 0.8726646259971648;
    scene::CameraRig rig;
    rig.name = "two";
    rig.poses.push_back(scene::look_at(Vec3(2.4, 0.0, 0.0), Vec3::Zero(), fov, res, res));
    Vec3 eye2 = Vec3(-0.4, 0.3, 0.8).normalized() * 2.4;
    rig.poses.push_back(scene::look_at(eye2, Vec3::Zero(), fov, res, res));
    rig.validate();
    return rig;
}

Tensor random_condition(uint64_t seed, int res) {
    RngStream rng(seed);
    Tensor c({3, res, res});
    for (size_t i = 0; i < c.size(); ++i) c[i] = 1.8 * rng.uniform() - 0.9;
    return c;
}

// Everything stage-II needs, at desk scale.
struct Stage2Fixture {
    models::Denoiser teacher;
    models::Generator gen;
    models::Reconstructor recon;
    scene::CameraRig rig;
    std::vector<std::pair<std::string, Tensor>> conditions;
    stage2::Stage2Config cfg;

    explicit Stage2Fixture(int res = 8, int n_cond = 2)
        : teacher(models::make_teacher(tiny_cfg(2, res), cosine(), 21)),
          gen(models::init_generator_from_teacher(teacher)),
          recon(models::make_reconstructor(tiny_cfg(2, res, 9, 12), 22)),
          rig(two_rig(res)) {
        for (int i = 0; i < n_cond; ++i)
            conditions.emplace_back("cond" + std::to_string(i),
                                    random_condition(100 + static_cast<uint64_t>(i), res));
        cfg.ddim_steps = 4;
        cfg.n_views = 3;
        cfg.z_per_condition = 1;
        cfg.view_subset = 2;
        cfg.guidance = 2.0;
        cfg.batch_size = 2;
        cfg.epochs = 1;
        cfg.lr = 1e-3;
        cfg.seed = 7;
    }
};

double max_abs_diff_t(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("gecolab_s2_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Pseudo-GT views computed through the exact graph ops the loss replays, so a
// record targeting the current parameters yields a bit-exact zero loss.
stage2::PseudoGTRecord self_record(models::Generator& gen, models::Reconstructor& recon,
                                   const Tensor& condition, uint64_t z_seed,
                                   const scene::CameraRig& rig,
                                   const std::vector<scene::CameraPose>& poses,
                                   const splat::RasterConfig& raster) {
    ad::Tape tape;
    ParamBinding gb(tape, gen.params, false);
    ParamBinding rb(tape, recon.params, false);
    Tensor z = stage2::noise_for_seed(
        z_seed, {gen.cfg.views, 3, gen.cfg.resolution, gen.cfg.resolution});
    ad::Var x = gen.generate_var(tape, gb, z, condition);
    ad::Var packed = recon.reconstruct_var(tape, rb, x, rig);
    stage2::PseudoGTRecord rec;
    rec.cond_id = "self";
    rec.condition = condition;
    rec.z_seed = z_seed;
    rec.ddim_steps = 1;
    rec.teacher_digest = "none";
    rec.reconstructor_digest = recon.cfg.digest();
    for (const scene::CameraPose& pose : poses) {
        ad::Var out = splat::rasterize_var(packed, pose, raster);
        ad::Var rgb = ad::slice_rows(out, 0, 3);
        rec.views.push_back({pose, rgb.val()});
    }
    return rec;
}

double loss_value(models::Generator& gen, models::Reconstructor& recon,
                  const stage2::PseudoGTRecord& rec, const scene::CameraRig& rig, double lambda,
                  const std::vector<int>& subset, const metrics::PerceptualNet& net,
                  const splat::RasterConfig& raster) {
    ad::Tape tape;
    ParamBinding gb(tape, gen.params, false);
    ParamBinding rb(tape, recon.params, false);
    return stage2::stage2_loss(tape, gb, rb, gen, recon, rec, rig, lambda, subset, net, raster)
        .val()[0];
}

double pose_elevation(const scene::CameraPose& pose) {
    return std::asin(pose.position.y() / pose.position.norm());
}

} // namespace

TEST_CASE("stage2: config and record validation reject malformed inputs") {
    stage2::Stage2Config cfg;
    cfg.validate();
    stage2::Stage2Config bad = cfg;
    bad.ddim_steps = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lambda_perceptual = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lr = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.guidance = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    const scene::CameraRig rig = two_rig(8);
    stage2::PseudoGTRecord rec;
    rec.cond_id = "c";
    rec.condition = Tensor({3, 8, 8});
    rec.ddim_steps = 4;
    CHECK_THROWS_AS(rec.validate(), ConfigError);  // no views

    Tensor img({3, 8, 8});
    rec.views.push_back({rig.poses[0], Tensor({3, 16, 16})});
    CHECK_THROWS_AS(rec.validate(), ShapeError);  // image does not match pose
    rec.views[0].image = img;
    rec.views[0].image[0] = 1.5;
    CHECK_THROWS_AS(rec.validate(), NumericError);  // outside [-1,1]
    rec.views[0].image[0] = 0.5;
    rec.validate();
}

TEST_CASE("stage2: noise_for_seed is a pure function of the z seed") {
    const std::vector<int> shape = {2, 3, 8, 8};
    Tensor a = stage2::noise_for_seed(11, shape);
    Tensor b = stage2::noise_for_seed(11, shape);
    Tensor c = stage2::noise_for_seed(12, shape);
    CHECK(a.size() == 384);
    CHECK(max_abs_diff_t(a, b) == 0.0);
    CHECK(max_abs_diff_t(a, c) > 1e-3);
    double mean = 0;
    for (size_t i = 0; i < a.size(); ++i) mean += a[i];
    mean /= static_cast<double>(a.size());
    CHECK(std::abs(mean) < 0.2);
}

TEST_CASE("stage2: pseudo ground truth is deterministic, shaped, and seeded as documented") {
    Stage2Fixture fx;
    fx.cfg.z_per_condition = 2;
    std::vector<nlohmann::json> rows;
    auto sink = [&rows](const nlohmann::json& j) { rows.push_back(j); };
    stage2::PGTBuildResult r1 =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7, {}, sink);
    stage2::PGTBuildResult r2 =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7);

    REQUIRE(r1.records.size() == 4);
    REQUIRE(r2.records.size() == 4);
    CHECK(r1.skipped == 0);
    CHECK(rows.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        const stage2::PseudoGTRecord& rec = r1.records[i];
        rec.validate();
        CHECK(rec.ddim_steps == 4);
        CHECK(rec.views.size() == 3);
        CHECK(rec.teacher_digest == fx.teacher.cfg.digest());
        CHECK(rec.reconstructor_digest == fx.recon.cfg.digest());
        CHECK(stage2::record_digest(rec) == stage2::record_digest(r2.records[i]));
        CHECK(rows[i].at("digest").get<std::string>() == stage2::record_digest(rec));
        for (const stage2::PseudoGTView& v : rec.views) {
            CHECK(std::abs(v.pose.position.norm() - 2.4) < 1e-9);
            const double elev = pose_elevation(v.pose);
            CHECK(elev >= -0.5235987755982988 - 1e-12);
            CHECK(elev <= 0.7853981633974483 + 1e-12);
        }
    }
    // z seeds follow the documented derivation, so records are addressable.
    CHECK(r1.records[0].z_seed == derive_seed(7, 0));
    CHECK(r1.records[1].z_seed == derive_seed(7, 1));
    CHECK(r1.records[2].z_seed == derive_seed(7, 1000003ULL));
    CHECK(r1.records[0].z_seed != r1.records[1].z_seed);
    CHECK(stage2::record_digest(r1.records[0]) != stage2::record_digest(r1.records[1]));
    CHECK(stage2::record_digest(r1.records[0]) != stage2::record_digest(r1.records[2]));
}

TEST_CASE("stage2: record store round trips bit-exactly and rejects tampering") {
    Stage2Fixture fx;
    const fs::path root = fresh_dir("store");
    stage2::PGTBuildResult r =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7, root);
    REQUIRE(r.records.size() == 2);

    std::vector<std::pair<std::string, uint64_t>> listed = stage2::list_records(root);
    REQUIRE(listed.size() == 2);
    for (const stage2::PseudoGTRecord& rec : r.records) {
        stage2::PseudoGTRecord back = stage2::load_record(root, rec.cond_id, rec.z_seed);
        CHECK(back.ddim_steps == rec.ddim_steps);
        CHECK(back.teacher_digest == rec.teacher_digest);
        REQUIRE(back.views.size() == rec.views.size());
        // The digest is computed over 8-bit encodings, so it is invariant to
        // the save/load quantization.
        CHECK(stage2::record_digest(back) == stage2::record_digest(rec));
        for (size_t k = 0; k < rec.views.size(); ++k) {
            CHECK(max_abs_diff_t(back.views[k].image, rec.views[k].image) <= 1.0 / 255.0);
            CHECK((back.views[k].pose.position - rec.views[k].pose.position).norm() < 1e-12);
        }
        // A reloaded record re-saves to the same digest: quantization is
        // idempotent.
        const fs::path root2 = fresh_dir("store2_" + std::to_string(rec.z_seed));
        stage2::save_record(back, root2);
        stage2::PseudoGTRecord again = stage2::load_record(root2, rec.cond_id, rec.z_seed);
        CHECK(stage2::record_digest(again) == stage2::record_digest(rec));
        for (size_t k = 0; k < rec.views.size(); ++k)
            CHECK(max_abs_diff_t(again.views[k].image, back.views[k].image) == 0.0);
    }

    // Corrupt the stored digest; the loader must refuse.
    const stage2::PseudoGTRecord& first = r.records[0];
    const fs::path meta = root / first.cond_id / std::to_string(first.z_seed) / "meta.json";
    nlohmann::json j;
    {
        std::ifstream in(meta);
        in >> j;
    }
    j["content_digest"] = std::string(64, '0');
    {
        std::ofstream out(meta);
        out << j.dump(2);
    }
    CHECK_THROWS_AS(stage2::load_record(root, first.cond_id, first.z_seed), StorageError);
    CHECK_THROWS_AS(stage2::load_record(root, "missing", 0), StorageError);
}

TEST_CASE("stage2: non-finite teacher samples are skipped, not stored") {
    Stage2Fixture fx;
    fx.teacher.params.get("stem.w")[0] = std::nan("");
    std::vector<nlohmann::json> rows;
    auto sink = [&rows](const nlohmann::json& j) { rows.push_back(j); };
    stage2::PGTBuildResult r =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7, {}, sink);
    CHECK(r.records.empty());
    CHECK(r.skipped == 2);
    REQUIRE(rows.size() == 2);
    for (const nlohmann::json& row : rows) CHECK(row.at("event") == "skip_record");
}

TEST_CASE("stage2: a record rebuilds exactly from its seed and checkpoints") {
    Stage2Fixture fx(8, 1);
    stage2::PGTBuildResult r =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7);
    REQUIRE(r.records.size() == 1);
    const stage2::PseudoGTRecord& rec = r.records[0];

    // Same seed, same checkpoints, same code path: the pseudo-GT store is
    // redundant with (seed, checkpoints) and can always be regenerated.
    Tensor z = stage2::noise_for_seed(rec.z_seed, {2, 3, 8, 8});
    Tensor x_mv = diffusion::ddim_sample(fx.teacher.handle(), &fx.conditions[0].second, z,
                                         fx.cfg.ddim_steps, fx.cfg.guidance, fx.teacher.schedule);
    for (size_t i = 0; i < x_mv.size(); ++i) x_mv[i] = std::clamp(x_mv[i], -1.0, 1.0);
    scene::MultiViewImageSet mv;
    mv.images = x_mv;
    mv.rig = fx.rig;
    splat::GaussianSet set = splat::fuse_splatter_images(fx.recon.reconstruct(mv));
    for (size_t k = 0; k < rec.views.size(); ++k) {
        Tensor img = splat::rasterize(set, rec.views[k].pose, fx.cfg.raster).image;
        CHECK(max_abs_diff_t(img, rec.views[k].image) == 0.0);
    }
}

TEST_CASE("stage2: loss is exactly zero when the pipeline already matches the record") {
    Stage2Fixture fx(8, 1);
    const metrics::PerceptualNet net;
    const splat::RasterConfig raster;
    std::vector<scene::CameraPose> poses = {
        scene::sample_random_pose(41, 2.4, 2.4, -0.4, 0.6, fx.rig.poses[0].fov_y, 8, 8),
        scene::sample_random_pose(42, 2.4, 2.4, -0.4, 0.6, fx.rig.poses[0].fov_y, 8, 8)};
    stage2::PseudoGTRecord rec =
        self_record(fx.gen, fx.recon, fx.conditions[0].second, 33, fx.rig, poses, raster);

    ad::Tape tape;
    ParamBinding gb(tape, fx.gen.params, true);
    ParamBinding rb(tape, fx.recon.params, true);
    stage2::Stage2LossParts parts = stage2::stage2_loss_parts(
        tape, gb, rb, fx.gen, fx.recon, rec, fx.rig, 0.7, {0, 1}, net, raster);
    CHECK(parts.mse.val()[0] == 0.0);
    CHECK(parts.perceptual.val()[0] == 0.0);
    CHECK(parts.total.val()[0] == 0.0);
    tape.backward(parts.total);
    CHECK(grad_norm(gb.collect_grads()) == 0.0);
    CHECK(grad_norm(rb.collect_grads()) == 0.0);
}

TEST_CASE("stage2: lambda decomposition is exact and the mse part matches an oracle") {
    Stage2Fixture fx(8, 1);
    const metrics::PerceptualNet net;
    stage2::PGTBuildResult r =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7);
    REQUIRE(r.records.size() == 1);
    const stage2::PseudoGTRecord& rec = r.records[0];
    const std::vector<int> subset = {0, 2};
    const double lambda = 0.7;

    ad::Tape tape;
    ParamBinding gb(tape, fx.gen.params, true);
    ParamBinding rb(tape, fx.recon.params, true);
    stage2::Stage2LossParts parts = stage2::stage2_loss_parts(
        tape, gb, rb, fx.gen, fx.recon, rec, fx.rig, lambda, subset, net, fx.cfg.raster);

    // Exact decomposition: total is assembled from the two means last.
    CHECK(parts.total.val()[0] == parts.mse.val()[0] + lambda * parts.perceptual.val()[0]);
    CHECK(parts.mse.val()[0] > 0.0);
    CHECK(parts.perceptual.val()[0] > 0.0);
    CHECK(loss_value(fx.gen, fx.recon, rec, fx.rig, 0.0, subset, net, fx.cfg.raster) ==
          parts.mse.val()[0]);

    // Independent value: plain (tape-free) forward, scalar mse.
    Tensor z = stage2::noise_for_seed(rec.z_seed, {2, 3, 8, 8});
    Tensor x = fx.gen.generate(z, rec.condition);
    scene::MultiViewImageSet mv;
    mv.images = x;
    mv.rig = fx.rig;
    splat::GaussianSet set = splat::fuse_splatter_images(fx.recon.reconstruct(mv));
    double mse = 0;
    for (int i : subset) {
        const stage2::PseudoGTView& v = rec.views[static_cast<size_t>(i)];
        Tensor img = splat::rasterize(set, v.pose, fx.cfg.raster).image;
        double s = 0;
        for (size_t k = 0; k < img.size(); ++k) s += (img[k] - v.image[k]) * (img[k] - v.image[k]);
        mse += s / static_cast<double>(img.size());
    }
    mse /= static_cast<double>(subset.size());
    CHECK(std::abs(mse - parts.mse.val()[0]) < 1e-9);

    // Both networks receive gradient.
    tape.backward(parts.total);
    CHECK(grad_norm(gb.collect_grads()) > 0.0);
    CHECK(grad_norm(rb.collect_grads()) > 0.0);

    // Bad subsets are rejected.
    ad::Tape t2;
    ParamBinding gb2(t2, fx.gen.params, false);
    ParamBinding rb2(t2, fx.recon.params, false);
    CHECK_THROWS_AS(stage2::stage2_loss(t2, gb2, rb2, fx.gen, fx.recon, rec, fx.rig, lambda, {},
                                        net, fx.cfg.raster),
                    ConfigError);
    CHECK_THROWS_AS(stage2::stage2_loss(t2, gb2, rb2, fx.gen, fx.recon, rec, fx.rig, lambda, {5},
                                        net, fx.cfg.raster),
                    ConfigError);
}

TEST_CASE("stage2: end-to-end gradients agree with finite differences") {
    Stage2Fixture fx(8, 1);
    const metrics::PerceptualNet net;
    splat::RasterConfig raster;
    raster.cut_sigma = 40.0;  // a hard cut radius is not differentiable at the boundary
    fx.cfg.raster = raster;
    stage2::PGTBuildResult r =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7);
    REQUIRE(r.records.size() == 1);
    const stage2::PseudoGTRecord& rec = r.records[0];
    const std::vector<int> subset = {0, 1};
    const double lambda = 0.5;

    ad::Tape tape;
    ParamBinding gb(tape, fx.gen.params, true);
    ParamBinding rb(tape, fx.recon.params, true);
    ad::Var loss = stage2::stage2_loss(tape, gb, rb, fx.gen, fx.recon, rec, fx.rig, lambda, subset,
                                       net, raster);
    tape.backward(loss);
    std::vector<Tensor> g_gen = gb.collect_grads();
    std::vector<Tensor> g_recon = rb.collect_grads();

    auto check_params = [&](ParameterStore& store, const std::vector<Tensor>& grads,
                            const std::string& name, uint64_t pick_seed) {
        const int idx = store.index_of(name);
        Tensor& w = store.get(name);
        const Tensor& g = grads[static_cast<size_t>(idx)];
        double gmax = 0;
        for (size_t i = 0; i < g.size(); ++i) gmax = std::max(gmax, std::abs(g[i]));
        REQUIRE(gmax > 0.0);
        RngStream rng(pick_seed);
        const double h = 1e-3;
        for (int trial = 0; trial < 5; ++trial) {
            const size_t i = static_cast<size_t>(
                rng.uniform_int(0, static_cast<int>(g.size()) - 1));
            const double keep = w[i];
            w[i] = keep + h;
            const double fp =
                loss_value(fx.gen, fx.recon, rec, fx.rig, lambda, subset, net, raster);
            w[i] = keep - h;
            const double fm =
                loss_value(fx.gen, fx.recon, rec, fx.rig, lambda, subset, net, raster);
            w[i] = keep;
            const double fd = (fp - fm) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-3 * gmax});
            CHECK(std::abs(fd - g[i]) / denom < 5e-2);
        }
    };
    check_params(fx.gen.params, g_gen, "head.w", 51);
    check_params(fx.recon.params, g_recon, "head.w", 52);
    check_params(fx.recon.params, g_recon, "stem.w", 53);
}

TEST_CASE("stage2: training lowers the record loss and never touches the records") {
    Stage2Fixture fx;
    const fs::path root = fresh_dir("train");
    stage2::PGTBuildResult built =
        stage2::gen_pseudo_gt(fx.teacher, fx.recon, fx.conditions, fx.rig, fx.cfg, 7, root);
    REQUIRE(built.records.size() == 2);
    std::vector<std::string> digests_before;
    for (const stage2::PseudoGTRecord& rec : built.records)
        digests_before.push_back(stage2::record_digest(rec));

    // At least one pseudo-GT view sits off the generation rig elevations, so
    // the reconstructor is supervised beyond the input cameras.
    bool off_rig = false;
    for (const stage2::PseudoGTRecord& rec : built.records)
        for (const stage2::PseudoGTView& v : rec.views) {
            double d = 1e9;
            for (const scene::CameraPose& p : fx.rig.poses)
                d = std::min(d, std::abs(pose_elevation(v.pose) - pose_elevation(p)));
            off_rig = off_rig || d > 0.01;
        }
    CHECK(off_rig);

    // Knock both networks off the parameters that produced the records, so
    // training has a measurable gap to close.
    RngStream knock(99);
    for (ParameterStore* ps : {&fx.gen.params, &fx.recon.params})
        for (int i = 0; i < ps->count(); ++i) {
            Tensor& t = ps->at(i);
            for (size_t k = 0; k < t.size(); ++k) t[k] += 0.03 * knock.normal();
        }

    const metrics::PerceptualNet net;
    const std::vector<int> all_views = {0, 1, 2};
    auto eval_loss = [&]() {
        double s = 0;
        for (const stage2::PseudoGTRecord& rec : built.records)
            s += loss_value(fx.gen, fx.recon, rec, fx.rig, fx.cfg.lambda_perceptual, all_views,
                            net, fx.cfg.raster);
        return s / static_cast<double>(built.records.size());
    };
    const double before = eval_loss();

    ParameterStore gen_init = fx.gen.params;
    stage2::Stage2Config tcfg = fx.cfg;
    tcfg.epochs = 5;
    tcfg.lr = 1e-3;
    std::vector<nlohmann::json> rows;
    auto sink = [&rows](const nlohmann::json& j) { rows.push_back(j); };
    stage2::Stage2Result res =
        stage2::train_stage2(fx.gen, fx.recon, built.records, fx.rig, tcfg, sink);

    CHECK(res.updates == 5);  // 2 records, batch 2: one update per epoch
    CHECK(std::isfinite(res.final_loss));
    REQUIRE(rows.size() == 5);
    for (const nlohmann::json& row : rows) {
        CHECK(std::isfinite(row.at("loss").get<double>()));
        CHECK(row.at("grad_norm_gen").get<double>() > 0.0);
        CHECK(row.at("grad_norm_recon").get<double>() > 0.0);
    }
    CHECK(fx.gen.params.max_abs_diff_from(gen_init) > 0.0);

    const double after = eval_loss();
    CHECK(after < before);

    CHECK(res.generator_ckpt.header.at("stage") == "stage2");
    CHECK(res.reconstructor_ckpt.header.at("stage") == "stage2");
    CHECK(res.generator_ckpt.header.at("parent_digests")[0] == fx.teacher.cfg.digest());

    // Records are frozen supervision: identical on disk and in memory.
    for (size_t i = 0; i < built.records.size(); ++i) {
        CHECK(stage2::record_digest(built.records[i]) == digests_before[i]);
        stage2::PseudoGTRecord back =
            stage2::load_record(root, built.records[i].cond_id, built.records[i].z_seed);
        CHECK(stage2::record_digest(back) == digests_before[i]);
    }
}

TEST_CASE("stage2: inference is deterministic, single-pass, and validated") {
    Stage2Fixture fx(8, 1);
    scene::CameraRig render;
    render.name = "render3";
    const double fov = fx.rig.poses[0].fov_y;
    for (int k = 0; k < 3; ++k)
        render.poses.push_back(
            scene::sample_random_pose(900 + static_cast<uint64_t>(k), 2.4, 2.4, -0.3, 0.5, fov, 8, 8));

    stage2::InferResult a =
        stage2::infer(fx.gen, fx.recon, fx.conditions[0].second, 11, fx.rig, render);
    stage2::InferResult b =
        stage2::infer(fx.gen, fx.recon, fx.conditions[0].second, 11, fx.rig, render);
    stage2::InferResult c =
        stage2::infer(fx.gen, fx.recon, fx.conditions[0].second, 12, fx.rig, render);

    CHECK(a.gen_evals == 1);
    CHECK(a.recon_evals == 1);
    CHECK(a.multiview.dim(0) == 2);
    CHECK(a.gaussians.size() == 2u * 8 * 8);
    REQUIRE(a.renders.size() == 3);
    CHECK(max_abs_diff_t(a.multiview, b.multiview) == 0.0);
    for (size_t k = 0; k < a.renders.size(); ++k)
        CHECK(max_abs_diff_t(a.renders[k], b.renders[k]) == 0.0);
    CHECK(max_abs_diff_t(a.multiview, c.multiview) > 1e-6);
    CHECK(a.t_multiview_ms >= 0.0);
    CHECK(a.t_reconstruct_ms >= 0.0);
    CHECK(a.t_render_ms >= 0.0);

    CHECK_THROWS_AS(stage2::infer(fx.gen, fx.recon, fx.conditions[0].second, 11, render, render),
                    ConfigError);
    models::Reconstructor other =
        models::make_reconstructor(tiny_cfg(2, 16, 9, 12), 5);
    CHECK_THROWS_AS(stage2::infer(fx.gen, other, fx.conditions[0].second, 11, fx.rig, render),
                    ConfigError);
}

TEST_CASE("stage2: floater fraction splits opacity mass by the silhouette") {
    splat::GaussianSet set;
    for (double sx : {-0.8, 0.8}) {
        splat::Gaussian g;
        g.position = Vec3(sx, 0.0, 0.0);
        g.scale = Vec3(0.15, 0.15, 0.15);
        g.opacity = 0.9;
        g.color = Vec3(0.8, 0.2, 0.2);
        set.gaussians.push_back(g);
    }
    const scene::CameraPose pose =
        scene::look_at(Vec3(0.0, 0.0, 3.0), Vec3::Zero(), 0.8726646259971648, 8, 8);

    Tensor ones({8, 8});
    Tensor zeros({8, 8});
    Tensor half({8, 8});
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            ones[static_cast<size_t>(y) * 8 + x] = 1.0;
            half[static_cast<size_t>(y) * 8 + x] = x < 4 ? 1.0 : 0.0;
        }

    CHECK(stage2::floater_fraction(set, pose, ones) == 0.0);
    CHECK(stage2::floater_fraction(set, pose, zeros) == 1.0);
    const double f = stage2::floater_fraction(set, pose, half);
    CHECK(f > 0.05);
    CHECK(f < 0.95);
    Tensor other = ones;
    for (size_t i = 0; i < other.size(); ++i) other[i] = 1.0 - half[i];
    CHECK(std::abs(f + stage2::floater_fraction(set, pose, other) - 1.0) < 1e-12);
    CHECK_THROWS_AS(stage2::floater_fraction(set, pose, Tensor({4, 4})), ShapeError);
}
