// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gecolab/metrics.hpp"
#include "gecolab/models.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/splat.hpp"
#include "gecolab/tape.hpp"

namespace gecolab::stage2 {

struct Stage2Config {
    int ddim_steps = 75;
    int n_views = 50;
    double lambda_perceptual = 1.0;
    double lr = 1e-6;
    int batch_size = 8;
    int epochs = 10;
    int z_per_condition = 1;
    int view_subset = 4;
    double guidance = 4.0;  // pseudo-GT sampling reuses the stage-I teacher guidance
    uint64_t seed = 0;
    splat::RasterConfig raster;

    void validate() const;
};

struct PseudoGTView {
    scene::CameraPose pose;
    Tensor image;  // [3,H,W] in [-1,1]
};

struct PseudoGTRecord {
    std::string cond_id;
    Tensor condition;  // [3,H,W]
    uint64_t z_seed = 0;
    std::vector<PseudoGTView> views;
    int ddim_steps = 0;
    std::string teacher_digest;
    std::string reconstructor_digest;

    void validate() const;
};

// Content digest over the 8-bit encodings, so it survives a store round trip.
std::string record_digest(const PseudoGTRecord& rec);

// Store layout under root: <cond_id>/<z_seed>/meta.json + cond.png +
// view_<k>.png + pose_<k>.json. Images quantize to 8-bit on save.
void save_record(const PseudoGTRecord& rec, const std::filesystem::path& root);
PseudoGTRecord load_record(const std::filesystem::path& root, const std::string& cond_id,
                           uint64_t z_seed);
std::vector<std::pair<std::string, uint64_t>> list_records(const std::filesystem::path& root);

// The noise sample a z_seed denotes, shared by pseudo-GT generation, training,
// and inference.
Tensor noise_for_seed(uint64_t z_seed, const std::vector<int>& shape);

struct PGTBuildResult {
    std::vector<PseudoGTRecord> records;
    int skipped = 0;
};

// Multi-step DDIM teacher samples -> reconstructor -> fused Gaussians ->
// renders at random poses. Pure in (seeds, checkpoints); non-finite samples
// skip the record and log.
PGTBuildResult gen_pseudo_gt(const models::Denoiser& teacher,
                             const models::Reconstructor& recon,
                             const std::vector<std::pair<std::string, Tensor>>& conditions,
                             const scene::CameraRig& rig, const Stage2Config& cfg, uint64_t seed,
                             const std::filesystem::path& out_root = {},
                             const models::LogSink& log = nullptr);

struct Stage2LossParts {
    ad::Var total;       // mse + lambda * perceptual
    ad::Var mse;         // mean over the subset
    ad::Var perceptual;  // mean over the subset, before lambda
};

Stage2LossParts stage2_loss_parts(ad::Tape& tape, ParamBinding& gen_binding,
                                  ParamBinding& recon_binding, const models::Generator& gen,
                                  const models::Reconstructor& recon,
                                  const PseudoGTRecord& record, const scene::CameraRig& rig,
                                  double lambda, const std::vector<int>& view_subset,
                                  const metrics::PerceptualNet& perceptual,
                                  const splat::RasterConfig& raster);
ad::Var stage2_loss(ad::Tape& tape, ParamBinding& gen_binding, ParamBinding& recon_binding,
                    const models::Generator& gen, const models::Reconstructor& recon,
                    const PseudoGTRecord& record, const scene::CameraRig& rig, double lambda,
                    const std::vector<int>& view_subset, const metrics::PerceptualNet& perceptual,
                    const splat::RasterConfig& raster);

struct Stage2Result {
    Checkpoint generator_ckpt;
    Checkpoint reconstructor_ckpt;
    long updates = 0;
    double final_loss = 0;
};

// Joint finetuning of generator + reconstructor on frozen records. Divergence
// restores the last-good parameters before throwing.
Stage2Result train_stage2(models::Generator& gen, models::Reconstructor& recon,
                          const std::vector<PseudoGTRecord>& records,
                          const scene::CameraRig& rig, const Stage2Config& cfg,
                          const models::LogSink& log = nullptr,
                          const std::filesystem::path& out_dir = {});

struct InferResult {
    splat::GaussianSet gaussians;
    Tensor multiview;             // [V,3,H,W] one-step generator output
    std::vector<Tensor> renders;  // [3,H,W] per requested pose
    double t_multiview_ms = 0;
    double t_reconstruct_ms = 0;
    double t_render_ms = 0;
    long long gen_evals = 0;    // network evaluations consumed by this call
    long long recon_evals = 0;
};

InferResult infer(const models::Generator& gen, const models::Reconstructor& recon,
                  const Tensor& condition, uint64_t z_seed, const scene::CameraRig& gen_rig,
                  const scene::CameraRig& render_rig, const splat::RasterConfig& raster = {});

// Fraction of rendered opacity mass outside a ground-truth silhouette;
// the floating-artifact statistic tracked across stage II.
double floater_fraction(const splat::GaussianSet& set, const scene::CameraPose& pose,
                        const Tensor& gt_mask, const splat::RasterConfig& raster = {});

} // namespace gecolab::stage2
