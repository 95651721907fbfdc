// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "gecolab/diffusion.hpp"
#include "gecolab/models.hpp"
#include "gecolab/params.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/tape.hpp"

namespace gecolab::vsd {

enum class WeightFn { Constant, Sigma2 };

const char* to_string(WeightFn w);
WeightFn weight_fn_from_string(const std::string& s);

struct VSDConfig {
    double guidance_teacher = 4.0;
    double guidance_student = 1.0;
    double t_student_min = 0.02;
    double t_student_max = 0.98;
    double t_vsd_min = 0.02;
    double t_vsd_max = 0.98;
    WeightFn weight_fn = WeightFn::Constant;
    double lr_gen = 1e-6;
    double lr_stu = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int steps = 5000;
    uint64_t seed = 0;
    int log_every = 25;
    int sample_every = 0;      // 0 disables sample grids
    int checkpoint_every = 0;  // 0 disables periodic checkpoints

    void validate() const;
};

// Score-distillation surrogate on an already-built generator graph. The
// residual w(t) * (eps_teacher - eps_student) is computed on detached values,
// so the surrogate's gradient w.r.t. generator parameters is the distillation
// estimator for this (t, eps) draw. Teacher runs CFG at guidance_teacher and
// is converted to EPS; the student likewise at guidance_student.
ad::Var vsd_generator_loss(ad::Var x0, const diffusion::DenoiserHandle& teacher,
                           const diffusion::DenoiserHandle& student, const Tensor* condition,
                           double t, const Tensor& eps, const VSDConfig& cfg,
                           const diffusion::DiffusionSchedule& schedule);

// Denoising loss on a detached generator sample: mean over elements of
// ||eps_hat(x_t; y, t) - eps||^2. The graph version trains the online student;
// the value version supports handle-based oracles.
ad::Var student_loss(ad::Tape& tape, ParamBinding& student_binding,
                     const models::Denoiser& student, const Tensor& x0, const Tensor* condition,
                     double t, const Tensor& eps);
double student_loss_value(const diffusion::DenoiserHandle& student,
                          const diffusion::DiffusionSchedule& schedule, const Tensor& x0,
                          const Tensor* condition, double t, const Tensor& eps);

struct Stage1Result {
    Checkpoint generator_ckpt;
    Checkpoint student_ckpt;
    long gen_updates = 0;
    long stu_updates = 0;
    bool lr_ratio_warning = false;
};

// Alternating optimization: per step one Adam update of the generator on the
// surrogate, then one student update on a fresh (t, eps) draw. Divergence
// restores the last-good parameters into gen/student before throwing.
Stage1Result train_stage1(models::Generator& gen, const models::Denoiser& teacher,
                          models::Denoiser& student, const scene::DatasetManifest& data,
                          const VSDConfig& cfg, const models::LogSink& log = nullptr,
                          const std::filesystem::path& out_dir = {});

} // namespace gecolab::vsd
