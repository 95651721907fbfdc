// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "gecolab/tape.hpp"
#include "gecolab/tensor.hpp"

namespace gecolab::diffusion {

enum class ScheduleKind { Cosine, LinearVP };
enum class PredictionKind { EPS, X0, V };

const char* to_string(ScheduleKind k);
const char* to_string(PredictionKind k);
ScheduleKind schedule_kind_from_string(const std::string& s);
PredictionKind prediction_kind_from_string(const std::string& s);

// Variance-preserving schedule on continuous t in (0, 1]. alpha^2 + sigma^2 = 1.
struct DiffusionSchedule {
    ScheduleKind kind = ScheduleKind::Cosine;
    double t_min = 1e-3;
    double t_max = 0.999;
    double beta_min = 0.1;   // linear-VP only
    double beta_max = 20.0;  // linear-VP only

    double alpha(double t) const;
    double sigma(double t) const;
};

DiffusionSchedule make_schedule(ScheduleKind kind, double t_min, double t_max,
                                double beta_min = 0.1, double beta_max = 20.0);

Tensor add_noise(const Tensor& x0, const Tensor& eps, double t, const DiffusionSchedule& s);
ad::Var add_noise(ad::Var x0, const Tensor& eps, double t, const DiffusionSchedule& s);

// VP identities between EPS / X0 / V parameterizations. Divisions by alpha or
// sigma clamp the divisor at 1e-4 and bump the singularity warning counter
// instead of failing mid-training.
Tensor convert_prediction(const Tensor& pred, PredictionKind from, PredictionKind to,
                          const Tensor& x_t, double t, const DiffusionSchedule& s);

int singularity_warnings();
void reset_singularity_warnings();

Tensor cfg_combine(const Tensor& cond_pred, const Tensor& uncond_pred, double scale);

// Deterministic (eta = 0) DDIM update. Accepts t_prev == t as an exact no-op.
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_pred, double t, double t_prev,
                 const DiffusionSchedule& s);

// Evaluation times: uniform from t_max down to t_min (steps points); the final
// update targets t = 0 where alpha = 1, sigma = 0, so an exact-eps oracle
// denoiser recovers x0 exactly for any step count.
std::vector<double> ddim_timesteps(int steps, const DiffusionSchedule& s);

// Minimal denoiser interface at the diffusion layer: condition may be null
// (unconditional branch). Output shaped like x_t, in `kind` parameterization.
struct DenoiserHandle {
    std::function<Tensor(const Tensor& x_t, double t, const Tensor* condition)> fn;
    PredictionKind kind = PredictionKind::EPS;
};

// Guidance == 1 never evaluates the unconditional branch; null condition runs
// purely unconditional. eval_counter (optional) counts denoiser evaluations.
Tensor ddim_sample(const DenoiserHandle& den, const Tensor* condition, const Tensor& z,
                   int steps, double guidance, const DiffusionSchedule& s,
                   long* eval_counter = nullptr);

// CFG-combined prediction at one (x_t, t), converted to `out_kind`.
Tensor guided_prediction(const DenoiserHandle& den, const Tensor& x_t, double t,
                         const Tensor* condition, double guidance, PredictionKind out_kind,
                         const DiffusionSchedule& s, long* eval_counter = nullptr);

} // namespace gecolab::diffusion
