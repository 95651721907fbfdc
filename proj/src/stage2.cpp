// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/stage2.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "gecolab/digest.hpp"
#include "gecolab/errors.hpp"
#include "gecolab/image_io.hpp"
#include "gecolab/nn_ops.hpp"
#include "gecolab/rng.hpp"

namespace gecolab::stage2 {

namespace {

using ad::Tape;
using ad::Var;

constexpr double kElevMin = -0.5235987755982988;  // -30 deg
constexpr double kElevMax = 0.7853981633974483;   // +45 deg

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

bool finite(const Tensor& t) {
    for (size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream out(p);
    if (!out) throw StorageError("cannot write " + p.string());
    out << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw StorageError("cannot read " + p.string());
    return nlohmann::json::parse(in);
}

} // namespace

void Stage2Config::validate() const {
    if (ddim_steps < 1 || n_views < 1 || batch_size < 1 || epochs < 1 || z_per_condition < 1 ||
        view_subset < 1)
        throw ConfigError("Stage2Config: counts must be positive");
    if (lambda_perceptual < 0) throw ConfigError("Stage2Config: lambda must be >= 0");
    if (lr <= 0) throw ConfigError("Stage2Config: lr must be > 0");
    if (guidance < 0) throw ConfigError("Stage2Config: guidance must be >= 0");
}

void PseudoGTRecord::validate() const {
    if (views.empty()) throw ConfigError("PseudoGTRecord: views must be nonempty");
    if (condition.ndim() != 3 || condition.dim(0) != 3)
        throw ShapeError("PseudoGTRecord: condition must be [3,H,W]");
    for (const PseudoGTView& v : views) {
        if (v.image.ndim() != 3 || v.image.dim(0) != 3 || v.image.dim(1) != v.pose.height ||
            v.image.dim(2) != v.pose.width)
            throw ShapeError("PseudoGTRecord: view image does not match its pose");
        for (size_t i = 0; i < v.image.size(); ++i)
            if (v.image[i] < -1.0 || v.image[i] > 1.0 || !std::isfinite(v.image[i]))
                throw NumericError("PseudoGTRecord: view image outside [-1,1]");
    }
}

std::string record_digest(const PseudoGTRecord& rec) {
    Sha256 h;
    h.update(rec.cond_id);
    const uint64_t z = rec.z_seed;
    h.update(&z, sizeof z);
    const int steps = rec.ddim_steps;
    h.update(&steps, sizeof steps);
    std::vector<unsigned char> cond_png = encode_png(rec.condition);
    h.update(cond_png.data(), cond_png.size());
    for (const PseudoGTView& v : rec.views) {
        h.update(v.pose.to_json().dump());
        std::vector<unsigned char> png = encode_png(v.image);
        h.update(png.data(), png.size());
    }
    return h.hex_digest();
}

void save_record(const PseudoGTRecord& rec, const std::filesystem::path& root) {
    rec.validate();
    const std::filesystem::path dir = root / rec.cond_id / std::to_string(rec.z_seed);
    std::filesystem::create_directories(dir);
    write_png(dir / "cond.png", rec.condition);
    for (size_t k = 0; k < rec.views.size(); ++k) {
        write_png(dir / ("view_" + std::to_string(k) + ".png"), rec.views[k].image);
        write_json(dir / ("pose_" + std::to_string(k) + ".json"), rec.views[k].pose.to_json());
    }
    write_json(dir / "meta.json", {{"schema_version", 1},
                                   {"cond_id", rec.cond_id},
                                   {"z_seed", rec.z_seed},
                                   {"n_views", rec.views.size()},
                                   {"ddim_steps", rec.ddim_steps},
                                   {"teacher_digest", rec.teacher_digest},
                                   {"reconstructor_digest", rec.reconstructor_digest},
                                   {"content_digest", record_digest(rec)}});
}

PseudoGTRecord load_record(const std::filesystem::path& root, const std::string& cond_id,
                           uint64_t z_seed) {
    const std::filesystem::path dir = root / cond_id / std::to_string(z_seed);
    nlohmann::json meta = read_json(dir / "meta.json");
    PseudoGTRecord rec;
    rec.cond_id = meta.at("cond_id").get<std::string>();
    rec.z_seed = meta.at("z_seed").get<uint64_t>();
    rec.ddim_steps = meta.at("ddim_steps").get<int>();
    rec.teacher_digest = meta.at("teacher_digest").get<std::string>();
    rec.reconstructor_digest = meta.at("reconstructor_digest").get<std::string>();
    rec.condition = read_png(dir / "cond.png");
    const size_t n = meta.at("n_views").get<size_t>();
    rec.views.resize(n);
    for (size_t k = 0; k < n; ++k) {
        rec.views[k].pose =
            scene::CameraPose::from_json(read_json(dir / ("pose_" + std::to_string(k) + ".json")));
        rec.views[k].image = read_png(dir / ("view_" + std::to_string(k) + ".png"));
    }
    rec.validate();
    if (record_digest(rec) != meta.at("content_digest").get<std::string>())
        throw StorageError("load_record: content digest mismatch for " + dir.string());
    return rec;
}

std::vector<std::pair<std::string, uint64_t>> list_records(const std::filesystem::path& root) {
    std::vector<std::pair<std::string, uint64_t>> out;
    if (!std::filesystem::exists(root)) return out;
    for (const auto& cond_dir : std::filesystem::directory_iterator(root)) {
        if (!cond_dir.is_directory()) continue;
        for (const auto& z_dir : std::filesystem::directory_iterator(cond_dir.path())) {
            if (!z_dir.is_directory()) continue;
            if (!std::filesystem::exists(z_dir.path() / "meta.json")) continue;
            out.emplace_back(cond_dir.path().filename().string(),
                             std::stoull(z_dir.path().filename().string()));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Tensor noise_for_seed(uint64_t z_seed, const std::vector<int>& shape) {
    RngStream rng(derive_seed(z_seed, 0x5eedULL));
    return rng.normal_tensor(shape);
}

PGTBuildResult gen_pseudo_gt(const models::Denoiser& teacher, const models::Reconstructor& recon,
                             const std::vector<std::pair<std::string, Tensor>>& conditions,
                             const scene::CameraRig& rig, const Stage2Config& cfg, uint64_t seed,
                             const std::filesystem::path& out_root, const models::LogSink& log) {
    cfg.validate();
    if (conditions.empty()) throw ConfigError("gen_pseudo_gt: no conditions");
    const int v_count = static_cast<int>(rig.poses.size());
    if (v_count != teacher.cfg.views) throw ConfigError("gen_pseudo_gt: rig does not match teacher");
    const scene::CameraPose& p0 = rig.poses.at(0);
    const std::vector<int> xshape = {v_count, 3, p0.height, p0.width};
    const diffusion::DenoiserHandle h = teacher.handle();
    const std::string t_digest = teacher.cfg.digest();
    const std::string r_digest = recon.cfg.digest();

    PGTBuildResult res;
    for (size_t ci = 0; ci < conditions.size(); ++ci) {
        for (int zi = 0; zi < cfg.z_per_condition; ++zi) {
            const uint64_t z_seed =
                derive_seed(seed, 1000003ULL * static_cast<uint64_t>(ci) + static_cast<uint64_t>(zi));
            Tensor z = noise_for_seed(z_seed, xshape);
            Tensor x_mv = diffusion::ddim_sample(h, &conditions[ci].second, z, cfg.ddim_steps,
                                                 cfg.guidance, teacher.schedule);
            if (!finite(x_mv)) {
                ++res.skipped;
                if (log)
                    log({{"event", "skip_record"},
                         {"cond_id", conditions[ci].first},
                         {"z_seed", z_seed}});
                continue;
            }
            // DDIM samples can overshoot the image range; the reconstructor
            // input contract is [-1,1].
            for (size_t i = 0; i < x_mv.size(); ++i) x_mv[i] = std::clamp(x_mv[i], -1.0, 1.0);
            scene::MultiViewImageSet mv;
            mv.images = x_mv;
            mv.rig = rig;
            splat::GaussianSet set = splat::fuse_splatter_images(recon.reconstruct(mv));

            PseudoGTRecord rec;
            rec.cond_id = conditions[ci].first;
            rec.condition = conditions[ci].second;
            rec.z_seed = z_seed;
            rec.ddim_steps = cfg.ddim_steps;
            rec.teacher_digest = t_digest;
            rec.reconstructor_digest = r_digest;
            rec.views.reserve(static_cast<size_t>(cfg.n_views));
            const double radius = p0.position.norm();
            for (int k = 0; k < cfg.n_views; ++k) {
                PseudoGTView view;
                view.pose = scene::sample_random_pose(
                    derive_seed(z_seed, 7000ULL + static_cast<uint64_t>(k)), radius, radius,
                    kElevMin, kElevMax, p0.fov_y, p0.height, p0.width);
                view.image = splat::rasterize(set, view.pose, cfg.raster).image;
                rec.views.push_back(std::move(view));
            }
            if (!out_root.empty()) save_record(rec, out_root);
            if (log)
                log({{"event", "record"},
                     {"cond_id", rec.cond_id},
                     {"z_seed", rec.z_seed},
                     {"digest", record_digest(rec)}});
            res.records.push_back(std::move(rec));
        }
    }
    return res;
}

Stage2LossParts stage2_loss_parts(Tape& tape, ParamBinding& gen_binding,
                                  ParamBinding& recon_binding, const models::Generator& gen,
                                  const models::Reconstructor& recon, const PseudoGTRecord& record,
                                  const scene::CameraRig& rig, double lambda,
                                  const std::vector<int>& view_subset,
                                  const metrics::PerceptualNet& perceptual,
                                  const splat::RasterConfig& raster) {
    record.validate();
    if (view_subset.empty()) throw ConfigError("stage2_loss: empty view subset");
    for (int i : view_subset)
        if (i < 0 || i >= static_cast<int>(record.views.size()))
            throw ConfigError("stage2_loss: view index out of range");

    Tensor z = noise_for_seed(record.z_seed,
                              {gen.cfg.views, 3, gen.cfg.resolution, gen.cfg.resolution});
    Var x_mv = gen.generate_var(tape, gen_binding, z, record.condition);
    Var packed = recon.reconstruct_var(tape, recon_binding, x_mv, rig);

    Var mse_sum, perc_sum;
    bool first = true;
    for (int i : view_subset) {
        const PseudoGTView& v = record.views[static_cast<size_t>(i)];
        Var out = splat::rasterize_var(packed, v.pose, raster);
        Var rgb = ad::slice_rows(out, 0, 3);
        Var m = ad::mse_const(rgb, v.image);
        Var p = perceptual.distance_var(tape, rgb, v.image);
        if (first) {
            mse_sum = m;
            perc_sum = p;
            first = false;
        } else {
            mse_sum = ad::add(mse_sum, m);
            perc_sum = ad::add(perc_sum, p);
        }
    }
    const double inv = 1.0 / static_cast<double>(view_subset.size());
    Stage2LossParts parts;
    parts.mse = ad::scale(mse_sum, inv);
    parts.perceptual = ad::scale(perc_sum, inv);
    // Combined last so the lambda decomposition holds exactly.
    parts.total = ad::add(parts.mse, ad::scale(parts.perceptual, lambda));
    return parts;
}

Var stage2_loss(Tape& tape, ParamBinding& gen_binding, ParamBinding& recon_binding,
                const models::Generator& gen, const models::Reconstructor& recon,
                const PseudoGTRecord& record, const scene::CameraRig& rig, double lambda,
                const std::vector<int>& view_subset, const metrics::PerceptualNet& perceptual,
                const splat::RasterConfig& raster) {
    return stage2_loss_parts(tape, gen_binding, recon_binding, gen, recon, record, rig, lambda,
                             view_subset, perceptual, raster)
        .total;
}

Stage2Result train_stage2(models::Generator& gen, models::Reconstructor& recon,
                          const std::vector<PseudoGTRecord>& records, const scene::CameraRig& rig,
                          const Stage2Config& cfg, const models::LogSink& log,
                          const std::filesystem::path& out_dir) {
    cfg.validate();
    if (records.empty()) throw ConfigError("train_stage2: no records");
    const std::vector<std::string> parents = {records[0].teacher_digest,
                                              records[0].reconstructor_digest};
    const metrics::PerceptualNet perceptual;
    Adam opt_gen({cfg.lr, 0.9, 0.999, 1e-8});
    Adam opt_recon({cfg.lr, 0.9, 0.999, 1e-8});
    RngStream rng(derive_seed(cfg.seed, 0x57a6e2ULL));
    ParameterStore good_gen = gen.params;
    ParameterStore good_recon = recon.params;
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    Stage2Result res;
    const int n = static_cast<int>(records.size());
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates on the deterministic stream.
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(rng.uniform_int(0, i))]);
        for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
            const double t0 = now_ms();
            const int b1 = std::min(n, b0 + cfg.batch_size);
            std::vector<Tensor> acc_gen, acc_recon;
            double batch_loss = 0;
            try {
                for (int bi = b0; bi < b1; ++bi) {
                    const PseudoGTRecord& rec = records[static_cast<size_t>(order[static_cast<size_t>(bi)])];
                    std::vector<int> subset;
                    const int n_rec = static_cast<int>(rec.views.size());
                    for (int k = 0; k < std::min(cfg.view_subset, n_rec); ++k)
                        subset.push_back(rng.uniform_int(0, n_rec - 1));
                    Tape tape;
                    ParamBinding pb_gen(tape, gen.params, true);
                    ParamBinding pb_recon(tape, recon.params, true);
                    Var loss = stage2_loss(tape, pb_gen, pb_recon, gen, recon, rec, rig,
                                           cfg.lambda_perceptual, subset, perceptual, cfg.raster);
                    tape.backward(loss);
                    batch_loss += loss.val()[0];
                    std::vector<Tensor> g_gen = pb_gen.collect_grads();
                    std::vector<Tensor> g_recon = pb_recon.collect_grads();
                    if (acc_gen.empty()) {
                        acc_gen = std::move(g_gen);
                        acc_recon = std::move(g_recon);
                    } else {
                        for (size_t k = 0; k < acc_gen.size(); ++k) acc_gen[k] += g_gen[k];
                        for (size_t k = 0; k < acc_recon.size(); ++k) acc_recon[k] += g_recon[k];
                    }
                }
                const double inv = 1.0 / static_cast<double>(b1 - b0);
                for (Tensor& g : acc_gen) g *= inv;
                for (Tensor& g : acc_recon) g *= inv;
                batch_loss *= inv;
                const double gn_gen = grad_norm(acc_gen), gn_recon = grad_norm(acc_recon);
                if (!std::isfinite(batch_loss) || !std::isfinite(gn_gen) || !std::isfinite(gn_recon))
                    throw NumericError("non-finite batch");
                opt_gen.step(gen.params, acc_gen);
                opt_recon.step(recon.params, acc_recon);
                ++res.updates;
                res.final_loss = batch_loss;
                if (log)
                    log({{"epoch", epoch},
                         {"batch", b0 / cfg.batch_size},
                         {"loss", batch_loss},
                         {"grad_norm_gen", gn_gen},
                         {"grad_norm_recon", gn_recon},
                         {"wall_ms", now_ms() - t0}});
            } catch (const NumericError& e) {
                gen.params.copy_from(good_gen);
                recon.params.copy_from(good_recon);
                throw NumericError("train_stage2: diverged at epoch " + std::to_string(epoch) +
                                   ": " + e.what() + " (last-good parameters restored)");
            }
            good_gen.copy_from(gen.params);
            good_recon.copy_from(recon.params);
        }
        if (!out_dir.empty()) {
            save_checkpoint(models::make_generator_checkpoint(gen, "stage2", parents, {{"epoch", epoch}}),
                            out_dir / ("gen_epoch_" + std::to_string(epoch) + ".ckpt"));
            save_checkpoint(
                models::make_reconstructor_checkpoint(recon, "stage2", parents, {{"epoch", epoch}}),
                out_dir / ("recon_epoch_" + std::to_string(epoch) + ".ckpt"));
        }
    }
    res.generator_ckpt = models::make_generator_checkpoint(
        gen, "stage2", parents, {{"epochs", cfg.epochs}, {"final_loss", res.final_loss}});
    res.reconstructor_ckpt = models::make_reconstructor_checkpoint(
        recon, "stage2", parents, {{"epochs", cfg.epochs}, {"final_loss", res.final_loss}});
    return res;
}

InferResult infer(const models::Generator& gen, const models::Reconstructor& recon,
                  const Tensor& condition, uint64_t z_seed, const scene::CameraRig& gen_rig,
                  const scene::CameraRig& render_rig, const splat::RasterConfig& raster) {
    if (static_cast<int>(gen_rig.poses.size()) != gen.cfg.views)
        throw ConfigError("infer: generation rig does not match the generator");
    if (gen.cfg.resolution != recon.cfg.resolution || gen.cfg.views != recon.cfg.views)
        throw ConfigError("infer: generator and reconstructor checkpoints are incompatible");
    InferResult res;
    Tensor z = noise_for_seed(z_seed, {gen.cfg.views, 3, gen.cfg.resolution, gen.cfg.resolution});

    const long long g0 = gen.evals;
    double t0 = now_ms();
    res.multiview = gen.generate(z, condition);
    res.t_multiview_ms = now_ms() - t0;
    res.gen_evals = gen.evals - g0;

    const long long r0 = recon.evals;
    t0 = now_ms();
    scene::MultiViewImageSet mv;
    mv.images = res.multiview;
    mv.rig = gen_rig;
    res.gaussians = splat::fuse_splatter_images(recon.reconstruct(mv));
    res.t_reconstruct_ms = now_ms() - t0;
    res.recon_evals = recon.evals - r0;

    t0 = now_ms();
    res.renders.reserve(render_rig.poses.size());
    for (const scene::CameraPose& pose : render_rig.poses)
        res.renders.push_back(splat::rasterize(res.gaussians, pose, raster).image);
    res.t_render_ms = now_ms() - t0;
    return res;
}

double floater_fraction(const splat::GaussianSet& set, const scene::CameraPose& pose,
                        const Tensor& gt_mask, const splat::RasterConfig& raster) {
    if (gt_mask.ndim() != 2 || gt_mask.dim(0) != pose.height || gt_mask.dim(1) != pose.width)
        throw ShapeError("floater_fraction: mask must be [H,W] matching the pose");
    Tensor alpha = splat::rasterize(set, pose, raster).alpha;
    double outside = 0, total = 0;
    for (size_t i = 0; i < alpha.size(); ++i) {
        total += alpha[i];
        if (gt_mask[i] == 0.0) outside += alpha[i];
    }
    return total > 0 ? outside / total : 0.0;
}

} // namespace gecolab::stage2
