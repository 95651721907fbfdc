// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/diffusion.hpp"

#include <atomic>
#include <cmath>

#include "gecolab/errors.hpp"

namespace gecolab::diffusion {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDivisorFloor = 1e-4;

std::atomic<int> g_singularity_warnings{0};

} // namespace

const char* to_string(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Cosine: return "cosine";
        case ScheduleKind::LinearVP: return "linear-vp";
    }
    return "?";
}

const char* to_string(PredictionKind k) {
    switch (k) {
        case PredictionKind::EPS: return "eps";
        case PredictionKind::X0: return "x0";
        case PredictionKind::V: return "v";
    }
    return "?";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "cosine") return ScheduleKind::Cosine;
    if (s == "linear-vp" || s == "linear_vp") return ScheduleKind::LinearVP;
    throw ConfigError("unknown schedule kind: " + s);
}

PredictionKind prediction_kind_from_string(const std::string& s) {
    if (s == "eps") return PredictionKind::EPS;
    if (s == "x0") return PredictionKind::X0;
    if (s == "v") return PredictionKind::V;
    throw ConfigError("unknown prediction kind: " + s);
}

double DiffusionSchedule::alpha(double t) const {
    switch (kind) {
        case ScheduleKind::Cosine:
            return std::cos(0.5 * kPi * t);
        case ScheduleKind::LinearVP: {
            double log_mean = -0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min;
            return std::exp(log_mean);
        }
    }
    return 0.0;
}

double DiffusionSchedule::sigma(double t) const {
    switch (kind) {
        case ScheduleKind::Cosine:
            return std::sin(0.5 * kPi * t);
        case ScheduleKind::LinearVP: {
            double a = alpha(t);
            return std::sqrt(std::max(0.0, 1.0 - a * a));
        }
    }
    return 0.0;
}

DiffusionSchedule make_schedule(ScheduleKind kind, double t_min, double t_max, double beta_min,
                                double beta_max) {
    if (!(t_min > 0.0 && t_min < t_max && t_max <= 1.0))
        throw ConfigError("make_schedule: need 0 < t_min < t_max <= 1");
    if (kind == ScheduleKind::LinearVP && !(beta_min > 0.0 && beta_min < beta_max))
        throw ConfigError("make_schedule: need 0 < beta_min < beta_max");
    DiffusionSchedule s;
    s.kind = kind;
    s.t_min = t_min;
    s.t_max = t_max;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    return s;
}

Tensor add_noise(const Tensor& x0, const Tensor& eps, double t, const DiffusionSchedule& s) {
    if (x0.shape() != eps.shape()) throw ShapeError("add_noise: shape mismatch");
    double a = s.alpha(t), sg = s.sigma(t);
    Tensor out(x0.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + sg * eps[i];
    return out;
}

ad::Var add_noise(ad::Var x0, const Tensor& eps, double t, const DiffusionSchedule& s) {
    double a = s.alpha(t), sg = s.sigma(t);
    Tensor se = eps;
    se *= sg;
    return ad::add_const(ad::scale(x0, a), se);
}

int singularity_warnings() { return g_singularity_warnings.load(); }
void reset_singularity_warnings() { g_singularity_warnings.store(0); }

namespace {

double guard_divisor(double d) {
    if (d < kDivisorFloor) {
        g_singularity_warnings.fetch_add(1);
        return kDivisorFloor;
    }
    return d;
}

// pred -> x0 parameterization.
Tensor to_x0(const Tensor& pred, PredictionKind from, const Tensor& x_t, double a, double sg) {
    switch (from) {
        case PredictionKind::X0:
            return pred;
        case PredictionKind::EPS: {
            double ia = 1.0 / guard_divisor(a);
            Tensor out(pred.shape());
            for (size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - sg * pred[i]) * ia;
            return out;
        }
        case PredictionKind::V: {
            Tensor out(pred.shape());
            for (size_t i = 0; i < out.size(); ++i) out[i] = a * x_t[i] - sg * pred[i];
            return out;
        }
    }
    throw NumericError("to_x0: bad kind");
}

// x0 parameterization -> target kind.
Tensor from_x0(const Tensor& x0, PredictionKind to, const Tensor& x_t, double a, double sg) {
    switch (to) {
        case PredictionKind::X0:
            return x0;
        case PredictionKind::EPS: {
            double is = 1.0 / guard_divisor(sg);
            Tensor out(x0.shape());
            for (size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - a * x0[i]) * is;
            return out;
        }
        case PredictionKind::V: {
            double is = 1.0 / guard_divisor(sg);
            Tensor out(x0.shape());
            for (size_t i = 0; i < out.size(); ++i) out[i] = (a * x_t[i] - x0[i]) * is;
            return out;
        }
    }
    throw NumericError("from_x0: bad kind");
}

} // namespace

Tensor convert_prediction(const Tensor& pred, PredictionKind from, PredictionKind to,
                          const Tensor& x_t, double t, const DiffusionSchedule& s) {
    if (pred.shape() != x_t.shape()) throw ShapeError("convert_prediction: shape mismatch");
    if (from == to) return pred;
    double a = s.alpha(t), sg = s.sigma(t);
    // Direct paths that avoid an unnecessary division.
    if (from == PredictionKind::V && to == PredictionKind::EPS) {
        Tensor out(pred.shape());
        for (size_t i = 0; i < out.size(); ++i) out[i] = sg * x_t[i] + a * pred[i];
        return out;
    }
    if (from == PredictionKind::EPS && to == PredictionKind::V) {
        double ia = 1.0 / guard_divisor(a);
        Tensor out(pred.shape());
        for (size_t i = 0; i < out.size(); ++i) out[i] = (pred[i] - sg * x_t[i]) * ia;
        return out;
    }
    return from_x0(to_x0(pred, from, x_t, a, sg), to, x_t, a, sg);
}

Tensor cfg_combine(const Tensor& cond_pred, const Tensor& uncond_pred, double scale) {
    if (cond_pred.shape() != uncond_pred.shape()) throw ShapeError("cfg_combine: shape mismatch");
    if (scale < 0.0) throw ConfigError("cfg_combine: scale must be >= 0");
    Tensor out(cond_pred.shape());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = uncond_pred[i] + scale * (cond_pred[i] - uncond_pred[i]);
    return out;
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_pred, double t, double t_prev,
                 const DiffusionSchedule& s) {
    if (x_t.shape() != eps_pred.shape()) throw ShapeError("ddim_step: shape mismatch");
    if (t_prev > t) throw NumericError("ddim_step: t_prev must not exceed t");
    if (t_prev == t) return x_t;
    double a = s.alpha(t), sg = s.sigma(t);
    double ap = s.alpha(t_prev), sp = s.sigma(t_prev);
    double ia = 1.0 / guard_divisor(a);
    Tensor out(x_t.shape());
    for (size_t i = 0; i < out.size(); ++i) {
        double x0 = (x_t[i] - sg * eps_pred[i]) * ia;
        out[i] = ap * x0 + sp * eps_pred[i];
    }
    return out;
}

std::vector<double> ddim_timesteps(int steps, const DiffusionSchedule& s) {
    if (steps < 1) throw ConfigError("ddim_timesteps: steps must be >= 1");
    std::vector<double> ts(static_cast<size_t>(steps));
    if (steps == 1) {
        ts[0] = s.t_max;
        return ts;
    }
    double span = s.t_max - s.t_min;
    for (int i = 0; i < steps; ++i)
        ts[static_cast<size_t>(i)] = s.t_max - span * static_cast<double>(i) / static_cast<double>(steps - 1);
    return ts;
}

Tensor guided_prediction(const DenoiserHandle& den, const Tensor& x_t, double t,
                         const Tensor* condition, double guidance, PredictionKind out_kind,
                         const DiffusionSchedule& s, long* eval_counter) {
    auto eval = [&](const Tensor* c) {
        if (eval_counter) ++*eval_counter;
        Tensor p = den.fn(x_t, t, c);
        if (p.shape() != x_t.shape())
            throw ShapeError("denoiser output shape " + Tensor::shape_str(p.shape()) +
                             " != input " + Tensor::shape_str(x_t.shape()));
        return p;
    };
    Tensor combined;
    if (condition == nullptr) {
        combined = eval(nullptr);
    } else if (guidance == 1.0) {
        combined = eval(condition);
    } else {
        Tensor cond = eval(condition);
        Tensor uncond = eval(nullptr);
        combined = cfg_combine(cond, uncond, guidance);
    }
    return convert_prediction(combined, den.kind, out_kind, x_t, t, s);
}

Tensor ddim_sample(const DenoiserHandle& den, const Tensor* condition, const Tensor& z, int steps,
                   double guidance, const DiffusionSchedule& s, long* eval_counter) {
    std::vector<double> ts = ddim_timesteps(steps, s);
    Tensor x = z;
    for (int i = 0; i < steps; ++i) {
        double t = ts[static_cast<size_t>(i)];
        double t_prev = (i + 1 < steps) ? ts[static_cast<size_t>(i + 1)] : 0.0;
        Tensor eps = guided_prediction(den, x, t, condition, guidance, PredictionKind::EPS, s,
                                       eval_counter);
        x = ddim_step(x, eps, t, t_prev, s);
    }
    return x;
}

} // namespace gecolab::diffusion
