// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "gecolab/cli.hpp"
#include "gecolab/config.hpp"
#include "gecolab/digest.hpp"
#include "gecolab/errors.hpp"
#include "gecolab/models.hpp"
#include "gecolab/params.hpp"

using namespace gecolab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("gecolab_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p.string();
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

} // namespace

TEST_CASE("resolve_config layers defaults, file, and overrides") {
    const std::string text =
        "seed = 9\n"
        "[stage2]\n"
        "lr = 0.5\n";
    config::ResolvedConfig rc = config::resolve_config_text(text, {"stage2.epochs=3"});
    CHECK(rc.config.seed == 9);
    CHECK(rc.config.stage2.lr == doctest::Approx(0.5));
    CHECK(rc.config.stage2.epochs == 3);
    // Untouched keys keep their defaults.
    CHECK(rc.config.stage2.batch_size == 8);
    CHECK(rc.provenance.at("seed") == config::Source::File);
    CHECK(rc.provenance.at("stage2.lr") == config::Source::File);
    CHECK(rc.provenance.at("stage2.epochs") == config::Source::Override);
    CHECK(rc.provenance.at("stage2.batch_size") == config::Source::Default);

    json echo = rc.echo();
    CHECK(echo.at("seed").at("source") == "file");
    CHECK(echo.at("stage2.epochs").at("source") == "override");
    CHECK(echo.at("stage2.batch_size").at("source") == "default");

    // Overrides win over the file for the same key.
    config::ResolvedConfig rc2 = config::resolve_config_text(text, {"seed=77"});
    CHECK(rc2.config.seed == 77);
    CHECK(rc2.provenance.at("seed") == config::Source::Override);
}

TEST_CASE("resolve_config rejects unknown keys and type mismatches") {
    CHECK_THROWS_AS((void)config::resolve_config_text("", {"nosuch.key=1"}), ConfigError);
    CHECK_THROWS_AS((void)config::resolve_config_text("[nosuch]\nkey = 1\n", {}), ConfigError);
    CHECK_THROWS_AS((void)config::resolve_config_text("seed = \"abc\"\n", {}), ConfigError);
    CHECK_THROWS_AS((void)config::resolve_config_text("", {"seed=notanumber"}), ConfigError);
    CHECK_THROWS_AS((void)config::resolve_config_text("", {"strict_determinism=maybe"}), ConfigError);
    CHECK_THROWS_AS((void)config::resolve_config_text("", {"seed"}), ConfigError);
    // Duplicate keys in one file are a mistake, not a layer.
    CHECK_THROWS_AS((void)config::resolve_config_text("seed = 1\nseed = 2\n", {}), ConfigError);
    // Malformed lines.
    CHECK_THROWS_AS((void)config::resolve_config_text("seed 1\n", {}), ConfigError);
    CHECK_THROWS_AS((void)config::resolve_config_text("[dataset\nscenes = 1\n", {}), ConfigError);
    CHECK_THROWS_AS((void)config::resolve_config_text("[dataset]\nscenes = \"unterminated\n", {}),
                    ConfigError);
}

TEST_CASE("emit_config round trips through the parser") {
    config::ResolvedConfig rc = config::resolve_config_text(
        "[dataset]\nrig = \"ring\"\nring_count = 3\n[model]\nviews = 3\n[vsd]\nweight_fn = "
        "\"sigma2\"\n",
        {"stage2.lambda_perceptual=0.25", "paths.reports=/tmp/r eports"});
    const std::string emitted = config::emit_config(rc.config);
    config::ResolvedConfig back = config::resolve_config_text(emitted, {});
    CHECK(back.config.to_json() == rc.config.to_json());
    CHECK(back.config.digest() == rc.config.digest());
    // Every non-default key came from the file this time.
    CHECK(back.provenance.at("dataset.ring_count") == config::Source::File);
}

TEST_CASE("config digest is stable and sensitive") {
    config::RunConfig a = config::resolve_config_text("", {}).config;
    config::RunConfig b = config::resolve_config_text("", {}).config;
    CHECK(a.digest() == b.digest());
    config::RunConfig c = config::resolve_config_text("seed = 1\n", {}).config;
    CHECK(a.digest() != c.digest());
}

TEST_CASE("GECO_LAB_HOME seeds the default paths") {
    setenv("GECO_LAB_HOME", "/tmp/geco_home_test", 1);
    config::RunConfig cfg = config::resolve_config_text("", {}).config;
    CHECK(cfg.paths.dataset == "/tmp/geco_home_test/datasets/main");
    CHECK(cfg.paths.checkpoints == "/tmp/geco_home_test/checkpoints");
    CHECK(cfg.paths.pgt == "/tmp/geco_home_test/pgt");
    CHECK(cfg.paths.reports == "/tmp/geco_home_test/reports");
    unsetenv("GECO_LAB_HOME");
    config::RunConfig cfg2 = config::resolve_config_text("", {}).config;
    CHECK(cfg2.paths.dataset == "./geco_home/datasets/main");
}

TEST_CASE("RunConfig validate rejects inconsistent settings") {
    auto cfg_with = [](const std::vector<std::string>& sets) {
        return config::resolve_config_text("", sets).config;
    };
    CHECK_NOTHROW(cfg_with({}).validate());
    // Rig size must match the generator view count.
    CHECK_THROWS_AS(cfg_with({"model.views=5"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"dataset.rig=spiral"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"dataset.resolution=32"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"schedule.kind=bogus"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"eval.protocol=ring99"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"eval.diversity_seeds=1"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"stage2.ddim_steps=0"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"vsd.lr_gen=0"}).validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with({"schema_version=2"}).validate(), ConfigError);
    // Ring rig keeps views consistent through ring_count.
    CHECK_NOTHROW(
        cfg_with({"dataset.rig=ring", "dataset.ring_count=4", "model.views=4"}).validate());
}

TEST_CASE("CheckpointManifest round trips and validates") {
    cli::CheckpointManifest m;
    m.stage = "stage2";
    m.config_digest = std::string(64, 'a');
    m.parent_digests = {std::string(64, 'b'), std::string(64, 'c')};
    m.created_at = "2026-01-01T00:00:00Z";
    m.metrics_snapshot = {{"final_loss", 0.5}};
    CHECK_NOTHROW(m.validate());
    cli::CheckpointManifest back = cli::CheckpointManifest::from_json(m.to_json());
    CHECK(back.stage == m.stage);
    CHECK(back.parent_digests == m.parent_digests);
    CHECK(back.metrics_snapshot == m.metrics_snapshot);

    cli::CheckpointManifest bad = m;
    bad.stage = "stage3";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    cli::CheckpointManifest short_digest = m;
    short_digest.config_digest = "abc";
    CHECK_THROWS_AS(short_digest.validate(), ConfigError);
}

TEST_CASE("cli rejects bad invocations with exit code 2") {
    CHECK(cli::run({"bogus"}) == 2);
    CHECK(cli::run({"infer", "--nosuchflag"}) == 2);
    CHECK(cli::run({"dataset", "build", "--set", "nosuch.key=1"}) == 2);
    CHECK(cli::run({"dataset"}) == 2);
    CHECK(cli::run({"--help"}) == 0);
    CHECK(cli::run({"compare", "--help"}) == 0);
}

TEST_CASE("cli pipeline runs end to end") {
    const fs::path root = fresh_dir("e2e");
    const std::string cfg_path = write_text(root / "tiny.toml",
        "seed = 5\n"
        "[paths]\n"
        "dataset = \"" + (root / "datasets").string() + "\"\n"
        "checkpoints = \"" + (root / "checkpoints").string() + "\"\n"
        "pgt = \"" + (root / "pgt").string() + "\"\n"
        "reports = \"" + (root / "reports").string() + "\"\n"
        "[dataset]\n"
        "scenes = 2\n"
        "resolution = 16\n"
        "rig = \"ring\"\n"
        "ring_count = 2\n"
        "[model]\n"
        "width = 4\n"
        "views = 2\n"
        "resolution = 16\n"
        "cond_channels = 4\n"
        "time_dim = 8\n"
        "groups = 2\n"
        "[teacher]\n"
        "steps = 4\n"
        "log_every = 2\n"
        "[recon]\n"
        "steps = 4\n"
        "novel_views_per_step = 1\n"
        "log_every = 2\n"
        "[vsd]\n"
        "steps = 3\n"
        "log_every = 2\n"
        "sample_every = 0\n"
        "checkpoint_every = 0\n"
        "[stage2]\n"
        "ddim_steps = 2\n"
        "n_views = 2\n"
        "z_per_condition = 1\n"
        "view_subset = 2\n"
        "batch_size = 2\n"
        "epochs = 1\n"
        "lr = 0.001\n"
        "[eval]\n"
        "protocol = \"ring15\"\n"
        "scenes = 1\n"
        "diversity_seeds = 2\n");

    // Stage order is enforced: stage1 before a teacher exists is a config error.
    CHECK(cli::run({"distill", "stage1", "--config", cfg_path}) == 2);

    CHECK(cli::run({"dataset", "build", "--config", cfg_path, "--out",
                    (root / "run_ds").string()}) == 0);
    json ds1 = read_json(root / "run_ds" / "result.json");
    CHECK(ds1.at("scenes") == 2);
    CHECK(fs::exists(root / "run_ds" / "config.resolved.toml"));
    CHECK(fs::exists(root / "run_ds" / "provenance.json"));
    json prov = read_json(root / "run_ds" / "provenance.json");
    CHECK(prov.at("dataset.scenes").at("source") == "file");
    CHECK(prov.at("dataset.scenes").at("value") == 2);

    // Rebuilding the dataset is bit-identical, including under strict mode.
    CHECK(cli::run({"dataset", "build", "--config", cfg_path, "--strict-determinism", "--out",
                    (root / "run_ds2").string()}) == 0);
    json ds2 = read_json(root / "run_ds2" / "result.json");
    CHECK(ds1.at("tree_digest") == ds2.at("tree_digest"));
    json prov2 = read_json(root / "run_ds2" / "provenance.json");
    CHECK(prov2.at("strict_determinism").at("source") == "override");
    CHECK(prov2.at("strict_determinism").at("value") == true);

    CHECK(cli::run({"train", "teacher", "--config", cfg_path, "--out",
                    (root / "run_teacher").string()}) == 0);
    json tman = read_json(root / "run_teacher" / "manifest.json");
    CHECK(tman.at("stage") == "teacher");
    CHECK(tman.at("parent_digests").size() == 1);
    CHECK(fs::exists(root / "checkpoints" / "teacher.ckpt"));
    CHECK(fs::file_size(root / "run_teacher" / "logs.jsonl") > 0);

    CHECK(cli::run({"train", "recon", "--config", cfg_path, "--out",
                    (root / "run_recon").string()}) == 0);
    CHECK(fs::exists(root / "checkpoints" / "recon.ckpt"));

    CHECK(cli::run({"distill", "stage1", "--config", cfg_path, "--out",
                    (root / "run_s1").string()}) == 0);
    CHECK(fs::exists(root / "checkpoints" / "gen_stage1.ckpt"));
    CHECK(fs::exists(root / "checkpoints" / "student.ckpt"));
    json s1man = read_json(root / "run_s1" / "manifest.json");
    CHECK(s1man.at("stage") == "stage1");
    CHECK(s1man.at("parent_digests")[0] ==
          sha256_file(root / "checkpoints" / "teacher.ckpt"));

    // Stage2 without pseudo ground truth is a config error.
    CHECK(cli::run({"distill", "stage2", "--config", cfg_path}) == 2);

    CHECK(cli::run({"pgt", "build", "--config", cfg_path, "--out",
                    (root / "run_pgt").string()}) == 0);
    json pgt1 = read_json(root / "run_pgt" / "result.json");
    CHECK(pgt1.at("records") == 2);
    CHECK(pgt1.at("skipped") == 0);
    // Pseudo-GT generation is deterministic across reruns.
    fs::remove_all(root / "pgt");
    CHECK(cli::run({"pgt", "build", "--config", cfg_path, "--out",
                    (root / "run_pgt2").string()}) == 0);
    CHECK(read_json(root / "run_pgt2" / "result.json").at("set_digest") ==
          pgt1.at("set_digest"));

    CHECK(cli::run({"distill", "stage2", "--config", cfg_path, "--out",
                    (root / "run_s2").string()}) == 0);
    CHECK(fs::exists(root / "checkpoints" / "gen_stage2.ckpt"));
    CHECK(fs::exists(root / "checkpoints" / "recon_stage2.ckpt"));
    json s2man = read_json(root / "run_s2" / "manifest.json");
    CHECK(s2man.at("stage") == "stage2");
    REQUIRE(s2man.at("parent_digests").size() == 2);
    CHECK(s2man.at("parent_digests")[0] ==
          sha256_file(root / "checkpoints" / "gen_stage1.ckpt"));
    CHECK(s2man.at("parent_digests")[1] ==
          sha256_file(root / "checkpoints" / "recon.ckpt"));

    // Infer: exactly one generator and one reconstructor evaluation.
    const std::string cond =
        (root / "datasets" / "scenes" / "scene_0000" / "cond.png").string();
    REQUIRE(fs::exists(cond));
    CHECK(cli::run({"infer", "--config", cfg_path, "--condition", cond, "--seed", "42",
                    "--out", (root / "run_infer").string(), "--json"}) == 0);
    CHECK(fs::exists(root / "run_infer" / "gaussians.gspl"));
    CHECK(fs::exists(root / "run_infer" / "multiview.png"));
    CHECK(fs::exists(root / "run_infer" / "renders" / "view_14.png"));
    json timings = read_json(root / "run_infer" / "timings.json");
    CHECK(timings.at("gen_evals") == 1);
    CHECK(timings.at("recon_evals") == 1);
    CHECK(timings.at("t_multiview_ms").get<double>() >= 0.0);
    CHECK(timings.at("t_reconstruct_ms").get<double>() >= 0.0);

    // Same seed reproduces the artifact, a different seed does not.
    CHECK(cli::run({"infer", "--config", cfg_path, "--condition", cond, "--seed", "42",
                    "--out", (root / "run_infer_b").string()}) == 0);
    CHECK(sha256_file(root / "run_infer" / "gaussians.gspl") ==
          sha256_file(root / "run_infer_b" / "gaussians.gspl"));
    CHECK(cli::run({"infer", "--config", cfg_path, "--condition", cond, "--seed", "43",
                    "--out", (root / "run_infer_c").string()}) == 0);
    CHECK(sha256_file(root / "run_infer" / "gaussians.gspl") !=
          sha256_file(root / "run_infer_c" / "gaussians.gspl"));

    // Eval enforces lineage: the pretrained reconstructor is not the stage2 partner.
    CHECK(cli::run({"eval", "--config", cfg_path, "--recon",
                    (root / "checkpoints" / "recon.ckpt").string(), "--out",
                    (root / "run_eval_bad").string()}) == 2);
    CHECK(cli::run({"eval", "--config", cfg_path, "--recon",
                    (root / "checkpoints" / "recon.ckpt").string(), "--force", "--out",
                    (root / "run_eval_forced").string()}) == 0);
    CHECK(cli::run({"eval", "--config", cfg_path, "--out",
                    (root / "run_eval").string()}) == 0);
    json report = read_json(root / "run_eval" / "report.json");
    CHECK(report.at("protocol") == "ring15");
    CHECK(fs::exists(root / "run_eval" / "table.txt"));

    // Evaluating the stage1 generator gives the second report for compare.
    CHECK(cli::run({"eval", "--config", cfg_path, "--generator",
                    (root / "checkpoints" / "gen_stage1.ckpt").string(), "--recon",
                    (root / "checkpoints" / "recon.ckpt").string(), "--out",
                    (root / "run_eval_s1").string()}) == 0);
    CHECK(cli::run({"compare", (root / "run_eval" / "report.json").string(),
                    (root / "run_eval_s1" / "report.json").string(), "--out",
                    (root / "run_cmp").string()}) == 0);
    CHECK(fs::exists(root / "run_cmp" / "comparison.json"));
    CHECK(cli::run({"compare", (root / "run_eval" / "report.json").string()}) == 2);

    // Export inspects checkpoints and gaussian sets.
    CHECK(cli::run({"export", "--checkpoint",
                    (root / "checkpoints" / "gen_stage2.ckpt").string(), "--gaussians",
                    (root / "run_infer" / "gaussians.gspl").string(), "--out",
                    (root / "run_exp").string()}) == 0);
    CHECK(fs::exists(root / "run_exp" / "header.json"));
    CHECK(fs::exists(root / "run_exp" / "inventory.json"));
    CHECK(fs::exists(root / "run_exp" / "gaussians.txt"));
    json inv = read_json(root / "run_exp" / "inventory.json");
    CHECK(inv.size() > 0);
    CHECK(cli::run({"export", "--out", (root / "run_exp_none").string()}) == 2);

    fs::remove_all(root);
}
