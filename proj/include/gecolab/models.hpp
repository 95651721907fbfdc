// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gecolab/diffusion.hpp"
#include "gecolab/metrics.hpp"
#include "gecolab/params.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/splat.hpp"
#include "gecolab/tape.hpp"

namespace gecolab::models {

// Shared convolutional encoder-decoder backbone: 3 resolution levels with
// skip connections, GroupNorm + SiLU, cross-view attention at the bottleneck,
// optional sinusoidal timestep bias and condition-encoding channel concat.
struct NetConfig {
    int width = 64;        // base channels; levels use width, 2x, 4x
    int views = 6;
    int resolution = 64;   // square, divisible by 4
    int in_channels = 3;
    int out_channels = 3;
    int cond_channels = 8;  // learned condition encoding (0 disables)
    int time_dim = 32;      // sinusoidal embedding size (0 disables)
    int groups = 8;

    void validate() const;
    nlohmann::json to_json() const;
    static NetConfig from_json(const nlohmann::json& j);
    std::string digest() const;  // sha256 of the canonical json
};

// Deterministic parameter construction for the backbone.
ParameterStore init_net_params(const NetConfig& cfg, uint64_t seed);

// Graph forward. x is [V,in,H,W]; cond (when given) is a raw [3,H,W] image
// encoded and concatenated to every view. zero_view_embedding supports the
// permutation-equivariance oracle.
ad::Var net_forward(ad::Tape& tape, ParamBinding& params, const NetConfig& cfg, ad::Var x,
                    std::optional<double> t, std::optional<ad::Var> cond,
                    bool zero_view_embedding = false);

// ---- denoisers (teacher / student) -------------------------------------

struct Denoiser {
    NetConfig cfg;
    diffusion::DiffusionSchedule schedule;
    diffusion::PredictionKind kind = diffusion::PredictionKind::V;
    ParameterStore params;
    mutable long long evals = 0;  // structural counter, single-writer

    // Plain forward on frozen parameters; x [V,3,H,W], condition [3,H,W].
    Tensor predict(const Tensor& x, double t, const Tensor* condition) const;
    ad::Var predict_var(ad::Tape& tape, ParamBinding& params_binding, ad::Var x, double t,
                        std::optional<ad::Var> condition) const;
    diffusion::DenoiserHandle handle() const;
};

Denoiser make_teacher(const NetConfig& cfg, const diffusion::DiffusionSchedule& schedule,
                      uint64_t seed);
Denoiser make_student_from_teacher(const Denoiser& teacher);

// ---- one-step generator -------------------------------------------------

struct Generator {
    NetConfig cfg;
    diffusion::DiffusionSchedule schedule;
    double t_gen = 0.999;
    ParameterStore params;
    mutable long long evals = 0;

    // One backbone evaluation at fixed t_gen, V-to-X0 conversion, soft unit
    // clamp head. z [V,3,H,W] pure noise, cond [3,H,W].
    Tensor generate(const Tensor& z, const Tensor& cond) const;
    ad::Var generate_var(ad::Tape& tape, ParamBinding& params_binding, const Tensor& z,
                         const Tensor& cond) const;
};

Generator init_generator_from_teacher(const Denoiser& teacher);

// ---- splatter-image reconstructor ----------------------------------------

struct Reconstructor {
    NetConfig cfg;  // in_channels 9 (RGB + rays), out_channels 12, no time/cond
    ParameterStore params;
    mutable long long evals = 0;

    std::vector<splat::SplatterImage> reconstruct(const scene::MultiViewImageSet& views) const;
    // Graph version: images [V,3,H,W] Var; returns fused packed [V*H*W, 14].
    ad::Var reconstruct_var(ad::Tape& tape, ParamBinding& params_binding, ad::Var images,
                            const scene::CameraRig& rig) const;
};

Reconstructor make_reconstructor(const NetConfig& cfg, uint64_t seed);

// Per-pixel ray origin and unit direction, [6,H,W].
Tensor ray_embedding(const scene::CameraPose& pose);

// ---- training -------------------------------------------------------------

struct StepStats {
    double loss = 0;
    double grad_norm = 0;
};

// One denoising update on a fixed draw (teacher pretraining unit).
StepStats teacher_step(Denoiser& teacher, const Tensor& views, const Tensor* condition,
                       double t, const Tensor& eps, Adam& opt);

struct TeacherTrainConfig {
    int steps = 2000;
    double lr = 1e-3;
    double cond_dropout = 0.1;
    uint64_t seed = 1;
    int log_every = 25;
};

struct ReconTrainConfig {
    int steps = 2000;
    double lr = 3e-4;
    double lambda_perceptual = 1.0;
    int novel_views_per_step = 2;
    uint64_t seed = 2;
    int log_every = 25;
    splat::RasterConfig raster;
};

// One reconstruction update against (pose, target) pairs.
StepStats reconstructor_step(Reconstructor& recon, const scene::MultiViewImageSet& views,
                             const std::vector<std::pair<scene::CameraPose, Tensor>>& targets,
                             const metrics::PerceptualNet& perceptual, double lambda,
                             const splat::RasterConfig& raster, Adam& opt);

using LogSink = std::function<void(const nlohmann::json&)>;

Checkpoint train_teacher(const scene::DatasetManifest& data, Denoiser& teacher,
                         const TeacherTrainConfig& cfg, const LogSink& log = nullptr);
Checkpoint pretrain_reconstructor(const scene::DatasetManifest& data, Reconstructor& recon,
                                  const ReconTrainConfig& cfg, const LogSink& log = nullptr);

// ---- checkpoints ----------------------------------------------------------

nlohmann::json schedule_to_json(const diffusion::DiffusionSchedule& s);
diffusion::DiffusionSchedule schedule_from_json(const nlohmann::json& j);

Checkpoint make_denoiser_checkpoint(const Denoiser& d, const std::string& stage,
                                    const std::vector<std::string>& parent_digests,
                                    const nlohmann::json& metrics_snapshot);
Checkpoint make_generator_checkpoint(const Generator& g, const std::string& stage,
                                     const std::vector<std::string>& parent_digests,
                                     const nlohmann::json& metrics_snapshot);
Checkpoint make_reconstructor_checkpoint(const Reconstructor& r, const std::string& stage,
                                         const std::vector<std::string>& parent_digests,
                                         const nlohmann::json& metrics_snapshot);

// Loaders re-derive the config digest from the embedded config and refuse a
// mismatch with the stored digest unless force.
Denoiser load_denoiser(const std::filesystem::path& path, bool force = false);
Generator load_generator(const std::filesystem::path& path, bool force = false);
Reconstructor load_reconstructor(const std::filesystem::path& path, bool force = false);

} // namespace gecolab::models
