// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/cli.hpp"

#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gecolab/config.hpp"
#include "gecolab/digest.hpp"
#include "gecolab/errors.hpp"
#include "gecolab/image_io.hpp"
#include "gecolab/metrics.hpp"
#include "gecolab/models.hpp"
#include "gecolab/rng.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/splat.hpp"
#include "gecolab/stage2.hpp"
#include "gecolab/vsd.hpp"

namespace gecolab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso_utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Options shared by every subcommand.
struct Common {
    std::string config_file;
    std::vector<std::string> sets;
    std::string out;
    bool json = false;
    bool strict = false;
    bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_file, "config file (docs/config_format.md)");
    cmd->add_option("--set", c.sets, "key=value override, repeatable");
    cmd->add_option("--out", c.out, "run directory (default under paths.reports)");
    cmd->add_flag("--json", c.json, "machine-readable stdout");
    cmd->add_flag("--strict-determinism", c.strict, "record the bit-exact rerun mode");
    cmd->add_flag("--force", c.force, "override lineage and digest refusals");
}

struct Ctx {
    config::ResolvedConfig rc;
    fs::path dir;
    bool json_out = false;
    bool force = false;
    std::ofstream log_stream;
    double last_loss = std::nan("");

    const config::RunConfig& cfg() const { return rc.config; }

    models::LogSink sink() {
        return [this](const json& j) {
            if (j.contains("loss")) last_loss = j.at("loss").get<double>();
            log_stream << j.dump() << "\n";
            log_stream.flush();
        };
    }
};

Ctx make_ctx(const Common& c, const std::string& slug) {
    Ctx ctx;
    std::vector<std::string> sets = c.sets;
    if (c.strict) sets.push_back("strict_determinism=true");
    std::optional<fs::path> file;
    if (!c.config_file.empty()) file = fs::path(c.config_file);
    ctx.rc = config::resolve_config(file, sets);
    ctx.rc.config.validate();
    ctx.dir = c.out.empty()
                  ? fs::path(ctx.rc.config.paths.reports) /
                        (slug + "-seed" + std::to_string(ctx.rc.config.seed))
                  : fs::path(c.out);
    fs::create_directories(ctx.dir);
    std::ofstream(ctx.dir / "config.resolved.toml") << config::emit_config(ctx.rc.config);
    std::ofstream(ctx.dir / "provenance.json") << ctx.rc.echo().dump(2) << "\n";
    ctx.log_stream.open(ctx.dir / "logs.jsonl");
    ctx.json_out = c.json;
    ctx.force = c.force;
    return ctx;
}

int finish(Ctx& ctx, json result, const std::string& human) {
    result["run_dir"] = ctx.dir.string();
    std::ofstream(ctx.dir / "result.json") << result.dump(2) << "\n";
    if (ctx.json_out)
        std::cout << result.dump() << "\n";
    else
        std::cout << human << "\n";
    return 0;
}

void write_manifest(const Ctx& ctx, const std::string& stage,
                    const std::vector<std::string>& parents, const json& metrics) {
    CheckpointManifest m;
    m.stage = stage;
    m.config_digest = ctx.cfg().digest();
    m.parent_digests = parents;
    m.created_at = iso_utc_now();
    m.metrics_snapshot = metrics;
    m.validate();
    std::ofstream(ctx.dir / "manifest.json") << m.to_json().dump(2) << "\n";
}

fs::path require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw ConfigError("missing " + what + ": " + p.string());
    return p;
}

fs::path require_parent_checkpoint(const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("missing parent checkpoint: " + p.string());
    return p;
}

scene::DatasetManifest require_dataset(const config::RunConfig& cfg) {
    const fs::path root = cfg.paths.dataset;
    if (!fs::exists(root / "manifest.json"))
        throw ConfigError("missing dataset at " + root.string() + " (run `geco dataset build`)");
    return scene::load_manifest(root);
}

fs::path checkpoint_path(const config::RunConfig& cfg, const std::string& name) {
    return fs::path(cfg.paths.checkpoints) / name;
}

void save_named_checkpoint(const config::RunConfig& cfg, const Checkpoint& ck,
                           const std::string& name) {
    fs::create_directories(cfg.paths.checkpoints);
    save_checkpoint(ck, checkpoint_path(cfg, name));
}

// ---- subcommand bodies -----------------------------------------------------

int do_dataset_build(const Common& c) {
    Ctx ctx = make_ctx(c, "dataset-build");
    const config::RunConfig& cfg = ctx.cfg();
    const scene::CameraRig rig = cfg.make_generation_rig();
    fs::create_directories(cfg.paths.dataset);
    scene::DatasetManifest m =
        scene::build_dataset(cfg.dataset.scenes, rig, cfg.seed, cfg.paths.dataset);
    const std::string tree = sha256_tree(cfg.paths.dataset);
    json result = {{"dataset", cfg.paths.dataset},
                   {"scenes", m.n_scenes},
                   {"rig", rig.name},
                   {"tree_digest", tree}};
    return finish(ctx, result,
                  "dataset: " + std::to_string(m.n_scenes) + " scenes at " + cfg.paths.dataset +
                      " (tree " + tree.substr(0, 12) + ")");
}

int do_train_teacher(const Common& c) {
    Ctx ctx = make_ctx(c, "train-teacher");
    const config::RunConfig& cfg = ctx.cfg();
    scene::DatasetManifest data = require_dataset(cfg);
    models::Denoiser teacher =
        models::make_teacher(cfg.teacher_net(), cfg.make_schedule(), derive_seed(cfg.seed, 11));
    Checkpoint ck = models::train_teacher(data, teacher, cfg.teacher, ctx.sink());
    save_named_checkpoint(cfg, ck, "teacher.ckpt");
    const fs::path out = checkpoint_path(cfg, "teacher.ckpt");
    const std::string parent = sha256_file(fs::path(cfg.paths.dataset) / "manifest.json");
    write_manifest(ctx, "teacher", {parent}, {{"final_loss", ctx.last_loss}});
    json result = {{"checkpoint", out.string()},
                   {"steps", cfg.teacher.steps},
                   {"final_loss", ctx.last_loss},
                   {"checkpoint_digest", sha256_file(out)}};
    return finish(ctx, result, "teacher trained: " + out.string());
}

int do_train_recon(const Common& c) {
    Ctx ctx = make_ctx(c, "train-recon");
    const config::RunConfig& cfg = ctx.cfg();
    scene::DatasetManifest data = require_dataset(cfg);
    models::Reconstructor recon =
        models::make_reconstructor(cfg.recon_net(), derive_seed(cfg.seed, 12));
    models::ReconTrainConfig rcfg = cfg.recon;
    rcfg.raster = cfg.render;
    Checkpoint ck = models::pretrain_reconstructor(data, recon, rcfg, ctx.sink());
    save_named_checkpoint(cfg, ck, "recon.ckpt");
    const fs::path out = checkpoint_path(cfg, "recon.ckpt");
    const std::string parent = sha256_file(fs::path(cfg.paths.dataset) / "manifest.json");
    write_manifest(ctx, "reconstructor", {parent}, {{"final_loss", ctx.last_loss}});
    json result = {{"checkpoint", out.string()},
                   {"steps", cfg.recon.steps},
                   {"final_loss", ctx.last_loss},
                   {"checkpoint_digest", sha256_file(out)}};
    return finish(ctx, result, "reconstructor trained: " + out.string());
}

int do_distill_stage1(const Common& c, const std::string& teacher_opt) {
    Ctx ctx = make_ctx(c, "distill-stage1");
    const config::RunConfig& cfg = ctx.cfg();
    const fs::path teacher_path = require_parent_checkpoint(
        teacher_opt.empty() ? checkpoint_path(cfg, "teacher.ckpt") : fs::path(teacher_opt));
    scene::DatasetManifest data = require_dataset(cfg);
    models::Denoiser teacher = models::load_denoiser(teacher_path, ctx.force);
    models::Denoiser student = models::make_student_from_teacher(teacher);
    models::Generator gen = models::init_generator_from_teacher(teacher);
    vsd::Stage1Result r = vsd::train_stage1(gen, teacher, student, data, cfg.vsd, ctx.sink(), ctx.dir);
    save_named_checkpoint(cfg, r.generator_ckpt, "gen_stage1.ckpt");
    save_named_checkpoint(cfg, r.student_ckpt, "student.ckpt");
    const fs::path out = checkpoint_path(cfg, "gen_stage1.ckpt");
    write_manifest(ctx, "stage1", {sha256_file(teacher_path)},
                   {{"gen_updates", r.gen_updates}, {"stu_updates", r.stu_updates}});
    json result = {{"checkpoint", out.string()},
                   {"student_checkpoint", checkpoint_path(cfg, "student.ckpt").string()},
                   {"gen_updates", r.gen_updates},
                   {"stu_updates", r.stu_updates},
                   {"lr_ratio_warning", r.lr_ratio_warning},
                   {"checkpoint_digest", sha256_file(out)}};
    return finish(ctx, result, "stage1 generator: " + out.string());
}

std::vector<std::pair<std::string, Tensor>> dataset_conditions(const scene::DatasetManifest& m) {
    std::vector<std::pair<std::string, Tensor>> conds;
    conds.reserve(static_cast<size_t>(m.n_scenes));
    for (int i = 0; i < m.n_scenes; ++i)
        conds.emplace_back(m.scene_ids[static_cast<size_t>(i)], scene::load_scene_data(m, i).condition);
    return conds;
}

int do_pgt_build(const Common& c, const std::string& teacher_opt, const std::string& recon_opt) {
    Ctx ctx = make_ctx(c, "pgt-build");
    const config::RunConfig& cfg = ctx.cfg();
    const fs::path teacher_path = require_parent_checkpoint(
        teacher_opt.empty() ? checkpoint_path(cfg, "teacher.ckpt") : fs::path(teacher_opt));
    const fs::path recon_path = require_parent_checkpoint(
        recon_opt.empty() ? checkpoint_path(cfg, "recon.ckpt") : fs::path(recon_opt));
    scene::DatasetManifest data = require_dataset(cfg);
    models::Denoiser teacher = models::load_denoiser(teacher_path, ctx.force);
    models::Reconstructor recon = models::load_reconstructor(recon_path, ctx.force);
    stage2::Stage2Config s2 = cfg.stage2;
    s2.raster = cfg.render;
    fs::create_directories(cfg.paths.pgt);
    stage2::PGTBuildResult r = stage2::gen_pseudo_gt(
        teacher, recon, dataset_conditions(data), cfg.make_generation_rig(), s2, cfg.seed,
        cfg.paths.pgt, ctx.sink());
    // Order-independent digest over the record set, for rerun comparisons.
    std::multiset<std::string> parts;
    for (const stage2::PseudoGTRecord& rec : r.records) parts.insert(stage2::record_digest(rec));
    Sha256 agg;
    for (const std::string& d : parts) agg.update(d.data(), d.size());
    json result = {{"store", cfg.paths.pgt},
                   {"records", r.records.size()},
                   {"skipped", r.skipped},
                   {"set_digest", agg.hex_digest()}};
    write_manifest(ctx, "stage2", {sha256_file(teacher_path), sha256_file(recon_path)},
                   {{"records", r.records.size()}, {"skipped", r.skipped}});
    return finish(ctx, result,
                  "pseudo-GT: " + std::to_string(r.records.size()) + " records at " +
                      cfg.paths.pgt + " (" + std::to_string(r.skipped) + " skipped)");
}

int do_distill_stage2(const Common& c, const std::string& gen_opt, const std::string& recon_opt) {
    Ctx ctx = make_ctx(c, "distill-stage2");
    const config::RunConfig& cfg = ctx.cfg();
    const fs::path gen_path = require_parent_checkpoint(
        gen_opt.empty() ? checkpoint_path(cfg, "gen_stage1.ckpt") : fs::path(gen_opt));
    const fs::path recon_path = require_parent_checkpoint(
        recon_opt.empty() ? checkpoint_path(cfg, "recon.ckpt") : fs::path(recon_opt));
    if (!fs::exists(fs::path(cfg.paths.pgt)))
        throw ConfigError("missing pseudo-GT store at " + cfg.paths.pgt +
                          " (run `geco pgt build`)");
    models::Generator gen = models::load_generator(gen_path, ctx.force);
    models::Reconstructor recon = models::load_reconstructor(recon_path, ctx.force);
    std::vector<stage2::PseudoGTRecord> records;
    for (const auto& [cond_id, z_seed] : stage2::list_records(cfg.paths.pgt))
        records.push_back(stage2::load_record(cfg.paths.pgt, cond_id, z_seed));
    if (records.empty())
        throw ConfigError("pseudo-GT store at " + cfg.paths.pgt + " holds no records");
    stage2::Stage2Config s2 = cfg.stage2;
    s2.raster = cfg.render;
    stage2::Stage2Result r = stage2::train_stage2(gen, recon, records, cfg.make_generation_rig(),
                                                  s2, ctx.sink(), ctx.dir);
    save_named_checkpoint(cfg, r.generator_ckpt, "gen_stage2.ckpt");
    save_named_checkpoint(cfg, r.reconstructor_ckpt, "recon_stage2.ckpt");
    const fs::path out = checkpoint_path(cfg, "gen_stage2.ckpt");
    write_manifest(ctx, "stage2", {sha256_file(gen_path), sha256_file(recon_path)},
                   {{"updates", r.updates}, {"final_loss", r.final_loss}});
    json result = {{"checkpoint", out.string()},
                   {"recon_checkpoint", checkpoint_path(cfg, "recon_stage2.ckpt").string()},
                   {"updates", r.updates},
                   {"final_loss", r.final_loss},
                   {"records", records.size()},
                   {"checkpoint_digest", sha256_file(out)}};
    return finish(ctx, result, "stage2 generator: " + out.string());
}

int do_infer(const Common& c, const std::string& condition_path, uint64_t z_seed,
             const std::string& gen_opt, const std::string& recon_opt) {
    Ctx ctx = make_ctx(c, "infer");
    const config::RunConfig& cfg = ctx.cfg();
    const fs::path gen_path = require_parent_checkpoint(
        gen_opt.empty() ? checkpoint_path(cfg, "gen_stage2.ckpt") : fs::path(gen_opt));
    const fs::path recon_path = require_parent_checkpoint(
        recon_opt.empty() ? checkpoint_path(cfg, "recon_stage2.ckpt") : fs::path(recon_opt));
    models::Generator gen = models::load_generator(gen_path, ctx.force);
    models::Reconstructor recon = models::load_reconstructor(recon_path, ctx.force);
    Tensor cond = read_png(require_file(condition_path, "condition image"));
    if (cond.dim(1) != cfg.model.resolution || cond.dim(2) != cfg.model.resolution)
        throw ConfigError("condition image is " + std::to_string(cond.dim(1)) + "x" +
                          std::to_string(cond.dim(2)) + ", model expects " +
                          std::to_string(cfg.model.resolution) + "x" +
                          std::to_string(cfg.model.resolution));

    scene::RigParams ring;
    ring.count = 15;
    ring.radius = cfg.dataset.radius;
    ring.fov_y = cfg.dataset.fov_y;
    ring.height = cfg.dataset.resolution;
    ring.width = cfg.dataset.resolution;
    const scene::CameraRig render_rig = scene::make_rig("ring", ring);
    stage2::InferResult r = stage2::infer(gen, recon, cond, z_seed, cfg.make_generation_rig(),
                                          render_rig, cfg.render);

    splat::export_gaussians(r.gaussians, ctx.dir / "gaussians.gspl");
    write_png(ctx.dir / "multiview.png", tile_views(r.multiview));
    fs::create_directories(ctx.dir / "renders");
    for (size_t k = 0; k < r.renders.size(); ++k)
        write_png(ctx.dir / "renders" / ("view_" + std::to_string(k) + ".png"),
                            r.renders[k]);
    json timings = {{"t_multiview_ms", r.t_multiview_ms},
                    {"t_reconstruct_ms", r.t_reconstruct_ms},
                    {"t_render_ms", r.t_render_ms},
                    {"gen_evals", r.gen_evals},
                    {"recon_evals", r.recon_evals}};
    std::ofstream(ctx.dir / "timings.json") << timings.dump(2) << "\n";
    json result = {{"gaussians", (ctx.dir / "gaussians.gspl").string()},
                   {"gaussian_count", r.gaussians.size()},
                   {"renders", r.renders.size()},
                   {"z_seed", z_seed},
                   {"timings", timings}};
    std::ostringstream human;
    human << "infer: " << r.gaussians.size() << " gaussians, " << r.renders.size()
          << " renders (multiview " << r.t_multiview_ms << " ms + reconstruct "
          << r.t_reconstruct_ms << " ms)";
    return finish(ctx, result, human.str());
}

int do_eval(const Common& c, const std::string& gen_opt, const std::string& recon_opt) {
    Ctx ctx = make_ctx(c, "eval");
    const config::RunConfig& cfg = ctx.cfg();
    const fs::path gen_path = require_parent_checkpoint(
        gen_opt.empty() ? checkpoint_path(cfg, "gen_stage2.ckpt") : fs::path(gen_opt));
    const fs::path recon_path = require_parent_checkpoint(
        recon_opt.empty() ? checkpoint_path(cfg, "recon_stage2.ckpt") : fs::path(recon_opt));
    models::Generator gen = models::load_generator(gen_path, ctx.force);
    models::Reconstructor recon = models::load_reconstructor(recon_path, ctx.force);

    // Lineage gate: stage2 finetunes generator and reconstructor jointly, so a
    // stage2 generator only pairs with the stage2 reconstructor that shares its
    // parent digests. A config digest alone cannot tell finetuned weights from
    // the pretrained ones.
    const json gen_header = load_checkpoint(gen_path).header;
    if (gen_header.value("stage", "") == "stage2" && !ctx.force) {
        const json recon_header = load_checkpoint(recon_path).header;
        const bool paired = recon_header.value("stage", "") == "stage2" &&
                            gen_header.value("parent_digests", json::array()) ==
                                recon_header.value("parent_digests", json::array());
        if (!paired)
            throw ConfigError(
                "parent digest mismatch: generator was not finetuned with this "
                "reconstructor (--force to evaluate anyway)");
    }

    // Held-out scenes: a fresh seed stream, never the training dataset seed.
    const fs::path eval_root = ctx.dir / "eval_data";
    scene::DatasetManifest eval_data = scene::build_dataset(
        cfg.eval.scenes, cfg.make_generation_rig(), derive_seed(cfg.seed, 0xe7a1ULL), eval_root);

    const scene::CameraRig gen_rig = cfg.make_generation_rig();
    double mv_ms = 0, rec_ms = 0;
    auto predict = [&](const Tensor& cond, uint64_t scene_seed, const scene::CameraRig& prig) {
        stage2::InferResult r = stage2::infer(gen, recon, cond, derive_seed(scene_seed, 0x5ca1eULL),
                                              gen_rig, prig, cfg.render);
        mv_ms += r.t_multiview_ms;
        rec_ms += r.t_reconstruct_ms;
        Tensor out({prig.size(), 3, prig.poses[0].height, prig.poses[0].width});
        const size_t per = static_cast<size_t>(3) * prig.poses[0].height * prig.poses[0].width;
        for (size_t v = 0; v < r.renders.size(); ++v)
            std::copy_n(r.renders[v].data(), per, out.data() + v * per);
        return out;
    };
    const metrics::PerceptualNet net;
    metrics::MetricsReport report = metrics::evaluate(predict, eval_data, cfg.eval.protocol, net);
    report.t_multiview_ms = mv_ms;
    report.t_reconstruct_ms = rec_ms;
    std::ofstream(ctx.dir / "report.json") << report.to_json().dump(2) << "\n";
    std::ofstream(ctx.dir / "table.txt") << report.table();
    json result = {{"protocol", report.protocol},
                   {"scenes", report.per_scene.size()},
                   {"psnr", report.aggregate.psnr},
                   {"ssim", report.aggregate.ssim},
                   {"perceptual", report.aggregate.perceptual},
                   {"report", (ctx.dir / "report.json").string()}};
    std::ostringstream human;
    human << "eval[" << report.protocol << "] psnr " << report.aggregate.psnr << " ssim "
          << report.aggregate.ssim << " perceptual " << report.aggregate.perceptual;
    return finish(ctx, result, human.str());
}

double metric_value(const metrics::SceneMetrics& m, const std::string& name) {
    if (name == "psnr") return m.psnr;
    if (name == "ssim") return m.ssim;
    if (name == "perceptual") return m.perceptual;
    throw ConfigError("unknown metric '" + name + "' (psnr|ssim|perceptual)");
}

int do_compare(const Common& c, const std::vector<std::string>& files,
               const std::vector<std::string>& expects) {
    Ctx ctx = make_ctx(c, "compare");
    if (files.size() < 2) throw ConfigError("compare needs at least two report files");
    std::vector<std::pair<std::string, metrics::MetricsReport>> runs;
    for (const std::string& f : files) {
        require_file(f, "metrics report");
        std::ifstream in(f);
        json j;
        in >> j;
        runs.emplace_back(fs::path(f).stem().string(), metrics::MetricsReport::from_json(j));
    }
    json table = metrics::compare_runs(runs);

    // Ordering assertions: reports are given best-first for each metric.
    json order_checks = json::array();
    for (const std::string& metric : expects) {
        metric_value(runs[0].second.aggregate, metric);  // validates the name
        const bool lower_better = metric == "perceptual";
        bool ok = true;
        for (size_t i = 0; i + 1 < runs.size(); ++i) {
            const double a = metric_value(runs[i].second.aggregate, metric);
            const double b = metric_value(runs[i + 1].second.aggregate, metric);
            ok = ok && (lower_better ? a <= b : a >= b);
        }
        order_checks.push_back({{"metric", metric}, {"ordered", ok}});
        if (!ok)
            throw NumericError("expected ordering violated for metric '" + metric + "'");
    }
    json result = {{"runs", files.size()}, {"table", table}, {"order_checks", order_checks}};
    std::ofstream(ctx.dir / "comparison.json") << result.dump(2) << "\n";
    return finish(ctx, result, table.dump(2));
}

int do_export(const Common& c, const std::string& ckpt_path, const std::string& gspl_path) {
    Ctx ctx = make_ctx(c, "export");
    json result = json::object();
    if (ckpt_path.empty() && gspl_path.empty())
        throw ConfigError("export needs --checkpoint and/or --gaussians");
    if (!ckpt_path.empty()) {
        require_file(ckpt_path, "checkpoint");
        Checkpoint ck = load_checkpoint(ckpt_path);
        std::ofstream(ctx.dir / "header.json") << ck.header.dump(2) << "\n";
        json inventory = json::array();
        for (int i = 0; i < ck.params.count(); ++i) {
            const Tensor& t = ck.params.at(i);
            double l2 = 0;
            for (size_t k = 0; k < t.size(); ++k) l2 += t[k] * t[k];
            inventory.push_back({{"name", ck.params.names()[static_cast<size_t>(i)]},
                                 {"shape", t.shape()},
                                 {"l2", std::sqrt(l2)}});
        }
        std::ofstream(ctx.dir / "inventory.json") << inventory.dump(2) << "\n";
        result["checkpoint"] = ckpt_path;
        result["kind"] = ck.header.value("kind", "");
        result["params"] = ck.params.count();
        result["file_digest"] = sha256_file(ckpt_path);
    }
    if (!gspl_path.empty()) {
        require_file(gspl_path, "gaussian set");
        splat::GaussianSet set = splat::import_gaussians(gspl_path);
        splat::dump_gaussians_ascii(set, ctx.dir / "gaussians.txt");
        result["gaussians"] = set.size();
    }
    return finish(ctx, result, "exported to " + ctx.dir.string());
}

} // namespace

// ---- manifest ---------------------------------------------------------------

void CheckpointManifest::validate() const {
    static const std::set<std::string> kStages = {"teacher", "reconstructor", "stage1", "stage2"};
    if (kStages.count(stage) == 0)
        throw ConfigError("CheckpointManifest: unknown stage '" + stage + "'");
    if (config_digest.size() != 64)
        throw ConfigError("CheckpointManifest: config_digest must be a sha256 hex string");
    if (created_at.empty()) throw ConfigError("CheckpointManifest: created_at missing");
}

json CheckpointManifest::to_json() const {
    return {{"schema_version", 1},
            {"stage", stage},
            {"config_digest", config_digest},
            {"parent_digests", parent_digests},
            {"created_at", created_at},
            {"metrics_snapshot", metrics_snapshot}};
}

CheckpointManifest CheckpointManifest::from_json(const json& j) {
    CheckpointManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    for (const auto& d : j.at("parent_digests")) m.parent_digests.push_back(d.get<std::string>());
    m.created_at = j.at("created_at").get<std::string>();
    m.metrics_snapshot = j.value("metrics_snapshot", json::object());
    m.validate();
    return m;
}

// ---- entry ------------------------------------------------------------------

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("geco");
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
    CLI::App app{"two-stage multi-view distillation pipeline"};
    app.name("geco");
    app.require_subcommand(1);

    Common c_dataset, c_teacher, c_recon, c_stage1, c_pgt, c_stage2, c_infer, c_eval, c_compare,
        c_export;

    CLI::App* dataset = app.add_subcommand("dataset", "dataset operations");
    dataset->require_subcommand(1);
    CLI::App* dataset_build = dataset->add_subcommand("build", "render a procedural dataset");
    add_common(dataset_build, c_dataset);

    CLI::App* train = app.add_subcommand("train", "supervised pretraining");
    train->require_subcommand(1);
    CLI::App* train_teacher = train->add_subcommand("teacher", "train the multi-view denoiser");
    add_common(train_teacher, c_teacher);
    CLI::App* train_recon = train->add_subcommand("recon", "pretrain the splatter reconstructor");
    add_common(train_recon, c_recon);

    CLI::App* distill = app.add_subcommand("distill", "distillation stages");
    distill->require_subcommand(1);
    CLI::App* stage1 = distill->add_subcommand("stage1", "one-step generator distillation");
    add_common(stage1, c_stage1);
    std::string stage1_teacher;
    stage1->add_option("--teacher", stage1_teacher, "teacher checkpoint");
    CLI::App* stage2cmd = distill->add_subcommand("stage2", "joint consistent finetuning");
    add_common(stage2cmd, c_stage2);
    std::string stage2_gen, stage2_recon;
    stage2cmd->add_option("--generator", stage2_gen, "stage1 generator checkpoint");
    stage2cmd->add_option("--recon", stage2_recon, "reconstructor checkpoint");

    CLI::App* pgt = app.add_subcommand("pgt", "pseudo ground truth store");
    pgt->require_subcommand(1);
    CLI::App* pgt_build = pgt->add_subcommand("build", "sample the teacher and render records");
    add_common(pgt_build, c_pgt);
    std::string pgt_teacher, pgt_recon;
    pgt_build->add_option("--teacher", pgt_teacher, "teacher checkpoint");
    pgt_build->add_option("--recon", pgt_recon, "reconstructor checkpoint");

    CLI::App* infer = app.add_subcommand("infer", "condition image -> gaussians + renders");
    add_common(infer, c_infer);
    std::string infer_cond, infer_gen, infer_recon;
    uint64_t infer_seed = 0;
    infer->add_option("--condition", infer_cond, "condition PNG")->required();
    infer->add_option("--seed", infer_seed, "z seed");
    infer->add_option("--generator", infer_gen, "generator checkpoint");
    infer->add_option("--recon", infer_recon, "reconstructor checkpoint");

    CLI::App* eval = app.add_subcommand("eval", "held-out protocol metrics");
    add_common(eval, c_eval);
    std::string eval_gen, eval_recon;
    eval->add_option("--generator", eval_gen, "generator checkpoint");
    eval->add_option("--recon", eval_recon, "reconstructor checkpoint");

    CLI::App* compare = app.add_subcommand("compare", "align metric reports");
    add_common(compare, c_compare);
    std::vector<std::string> compare_files, compare_expect;
    compare->add_option("reports", compare_files, "report.json files, best first");
    compare->add_option("--expect", compare_expect,
                        "metric that must be ordered best-first (repeatable)");

    CLI::App* exp = app.add_subcommand("export", "inspect and convert artifacts");
    add_common(exp, c_export);
    std::string export_ckpt, export_gspl;
    exp->add_option("--checkpoint", export_ckpt, "checkpoint to describe");
    exp->add_option("--gaussians", export_gspl, "GSPL file to dump as text");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (dataset_build->parsed()) return do_dataset_build(c_dataset);
        if (train_teacher->parsed()) return do_train_teacher(c_teacher);
        if (train_recon->parsed()) return do_train_recon(c_recon);
        if (stage1->parsed()) return do_distill_stage1(c_stage1, stage1_teacher);
        if (pgt_build->parsed()) return do_pgt_build(c_pgt, pgt_teacher, pgt_recon);
        if (stage2cmd->parsed()) return do_distill_stage2(c_stage2, stage2_gen, stage2_recon);
        if (infer->parsed()) return do_infer(c_infer, infer_cond, infer_seed, infer_gen, infer_recon);
        if (eval->parsed()) return do_eval(c_eval, eval_gen, eval_recon);
        if (compare->parsed()) return do_compare(c_compare, compare_files, compare_expect);
        if (exp->parsed()) return do_export(c_export, export_ckpt, export_gspl);
        std::cerr << app.help();
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace gecolab::cli
