// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/vsd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gecolab/errors.hpp"
#include "gecolab/image_io.hpp"
#include "gecolab/rng.hpp"

namespace gecolab::vsd {

namespace {

using ad::Tape;
using ad::Var;

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

bool finite(const Tensor& t) {
    for (size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

} // namespace

const char* to_string(WeightFn w) { return w == WeightFn::Constant ? "constant" : "sigma2"; }

WeightFn weight_fn_from_string(const std::string& s) {
    if (s == "constant") return WeightFn::Constant;
    if (s == "sigma2") return WeightFn::Sigma2;
    throw ConfigError("unknown weight_fn: " + s);
}

void VSDConfig::validate() const {
    if (guidance_teacher < 0 || guidance_student < 0)
        throw ConfigError("VSDConfig: guidance must be >= 0");
    auto range_ok = [](double lo, double hi) { return lo > 0 && hi < 1 && lo <= hi; };
    if (!range_ok(t_student_min, t_student_max) || !range_ok(t_vsd_min, t_vsd_max))
        throw ConfigError("VSDConfig: t ranges must lie inside (0,1)");
    if (lr_gen <= 0 || lr_stu <= 0) throw ConfigError("VSDConfig: learning rates must be > 0");
    if (steps < 1) throw ConfigError("VSDConfig: steps must be >= 1");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw ConfigError("VSDConfig: betas must be in [0,1)");
}

Var vsd_generator_loss(Var x0, const diffusion::DenoiserHandle& teacher,
                       const diffusion::DenoiserHandle& student, const Tensor* condition,
                       double t, const Tensor& eps, const VSDConfig& cfg,
                       const diffusion::DiffusionSchedule& schedule) {
    const Tensor& x0v = x0.val();
    if (!x0v.same_shape(eps)) throw ShapeError("vsd_generator_loss: eps shape mismatch");
    if (!finite(x0v))
        throw NumericError("vsd_generator_loss: non-finite generator output at t=" +
                           std::to_string(t));
    // The teacher/student signal is a function of the detached sample only.
    Tensor x_t = diffusion::add_noise(x0v, eps, t, schedule);
    Tensor eps_pre = diffusion::guided_prediction(teacher, x_t, t, condition,
                                                  cfg.guidance_teacher,
                                                  diffusion::PredictionKind::EPS, schedule);
    Tensor eps_stu = diffusion::guided_prediction(student, x_t, t, condition,
                                                  cfg.guidance_student,
                                                  diffusion::PredictionKind::EPS, schedule);
    Tensor residual = eps_pre;
    residual -= eps_stu;
    if (cfg.weight_fn == WeightFn::Sigma2) {
        const double s = schedule.sigma(t);
        residual *= s * s;
    }
    if (!finite(residual))
        throw NumericError("vsd_generator_loss: non-finite score residual at t=" +
                           std::to_string(t));
    return ad::dot_const(x0, residual);
}

Var student_loss(Tape& tape, ParamBinding& student_binding, const models::Denoiser& student,
                 const Tensor& x0, const Tensor* condition, double t, const Tensor& eps) {
    if (!x0.same_shape(eps)) throw ShapeError("student_loss: eps shape mismatch");
    Tensor x_t = diffusion::add_noise(x0, eps, t, student.schedule);
    std::optional<Var> cv;
    if (condition != nullptr) cv = tape.constant(*condition);
    Var pred = student.predict_var(tape, student_binding, tape.constant(x_t), t, cv);
    const double a = student.schedule.alpha(t), s = student.schedule.sigma(t);
    Var eps_hat;
    switch (student.kind) {
        case diffusion::PredictionKind::EPS:
            eps_hat = pred;
            break;
        case diffusion::PredictionKind::V: {
            // eps = sigma * x_t + alpha * v, exact on the VP circle.
            Tensor sxt = x_t;
            sxt *= s;
            eps_hat = ad::add_const(ad::scale(pred, a), sxt);
            break;
        }
        case diffusion::PredictionKind::X0: {
            // eps = (x_t - alpha * x0_hat) / sigma; t ranges keep sigma > 0.
            Tensor xs = x_t;
            xs *= 1.0 / s;
            eps_hat = ad::add_const(ad::scale(pred, -a / s), xs);
            break;
        }
    }
    return ad::mse_const(eps_hat, eps);
}

double student_loss_value(const diffusion::DenoiserHandle& student,
                          const diffusion::DiffusionSchedule& schedule, const Tensor& x0,
                          const Tensor* condition, double t, const Tensor& eps) {
    if (!x0.same_shape(eps)) throw ShapeError("student_loss_value: eps shape mismatch");
    Tensor x_t = diffusion::add_noise(x0, eps, t, schedule);
    Tensor pred = student.fn(x_t, t, condition);
    Tensor eps_hat = diffusion::convert_prediction(pred, student.kind,
                                                   diffusion::PredictionKind::EPS, x_t, t,
                                                   schedule);
    double acc = 0;
    for (size_t i = 0; i < eps_hat.size(); ++i) {
        const double d = eps_hat[i] - eps[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps_hat.size());
}

Stage1Result train_stage1(models::Generator& gen, const models::Denoiser& teacher,
                          models::Denoiser& student, const scene::DatasetManifest& data,
                          const VSDConfig& cfg, const models::LogSink& log,
                          const std::filesystem::path& out_dir) {
    cfg.validate();
    if (data.n_scenes < 1) throw ConfigError("train_stage1: empty dataset");
    if (!gen.params.same_layout(student.params))
        throw ConfigError("train_stage1: generator/student must share the teacher layout");

    Stage1Result res;
    const double ratio = cfg.lr_stu / cfg.lr_gen;
    if (ratio < 0.1 || ratio > 10.0) {
        res.lr_ratio_warning = true;
        if (log) log({{"warning", "lr_ratio"}, {"lr_gen", cfg.lr_gen}, {"lr_stu", cfg.lr_stu}});
    }

    // Stage I consumes only the condition view of each scene.
    std::vector<Tensor> conditions;
    conditions.reserve(static_cast<size_t>(data.n_scenes));
    for (int i = 0; i < data.n_scenes; ++i)
        conditions.push_back(scene::load_scene_data(data, i).condition);

    const diffusion::DenoiserHandle h_teacher = teacher.handle();
    const diffusion::DenoiserHandle h_student = student.handle();
    const std::vector<int> xshape = {gen.cfg.views, 3, gen.cfg.resolution, gen.cfg.resolution};

    Adam opt_gen({cfg.lr_gen, cfg.beta1, cfg.beta2, 1e-8});
    Adam opt_stu({cfg.lr_stu, cfg.beta1, cfg.beta2, 1e-8});
    RngStream rng(derive_seed(cfg.seed, 0x57a6e1ULL));

    ParameterStore good_gen = gen.params;
    ParameterStore good_stu = student.params;
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    for (int step = 0; step < cfg.steps; ++step) {
        const double t0 = now_ms();
        const Tensor& cond = conditions[static_cast<size_t>(rng.uniform_int(0, data.n_scenes - 1))];
        const Tensor z = rng.normal_tensor(xshape);
        const double t_g = rng.uniform(cfg.t_vsd_min, cfg.t_vsd_max);
        const Tensor eps_g = rng.normal_tensor(xshape);

        double loss_gen = 0, gnorm_gen = 0, loss_stu = 0, gnorm_stu = 0;
        Tensor x0_det;
        try {
            Tape tape;
            ParamBinding pb(tape, gen.params, true);
            Var x0 = gen.generate_var(tape, pb, z, cond);
            x0_det = x0.val();
            Var loss = vsd_generator_loss(x0, h_teacher, h_student, &cond, t_g, eps_g, cfg,
                                          gen.schedule);
            tape.backward(loss);
            loss_gen = loss.val()[0];
            std::vector<Tensor> grads = pb.collect_grads();
            gnorm_gen = grad_norm(grads);
            if (!std::isfinite(loss_gen) || !std::isfinite(gnorm_gen))
                throw NumericError("non-finite generator update");
            opt_gen.step(gen.params, grads);
            ++res.gen_updates;

            const double t_s = rng.uniform(cfg.t_student_min, cfg.t_student_max);
            const Tensor eps_s = rng.normal_tensor(xshape);
            Tape tape_s;
            ParamBinding pb_s(tape_s, student.params, true);
            Var sl = student_loss(tape_s, pb_s, student, x0_det, &cond, t_s, eps_s);
            tape_s.backward(sl);
            loss_stu = sl.val()[0];
            std::vector<Tensor> grads_s = pb_s.collect_grads();
            gnorm_stu = grad_norm(grads_s);
            if (!std::isfinite(loss_stu) || !std::isfinite(gnorm_stu))
                throw NumericError("non-finite student update");
            opt_stu.step(student.params, grads_s);
            ++res.stu_updates;
        } catch (const NumericError& e) {
            gen.params.copy_from(good_gen);
            student.params.copy_from(good_stu);
            throw NumericError("train_stage1: diverged at step " + std::to_string(step) + ": " +
                               e.what() + " (last-good parameters restored)");
        }
        good_gen.copy_from(gen.params);
        good_stu.copy_from(student.params);

        if (log && (step % cfg.log_every == 0 || step == cfg.steps - 1))
            log({{"step", step},
                 {"loss_gen", loss_gen},
                 {"loss_stu", loss_stu},
                 {"grad_norm_gen", gnorm_gen},
                 {"grad_norm_stu", gnorm_stu},
                 {"wall_ms", now_ms() - t0}});
        if (!out_dir.empty() && cfg.sample_every > 0 && step % cfg.sample_every == 0) {
            Tensor grid = tile_views(gen.generate(z, conditions[0]));
            write_png(out_dir / ("samples_step_" + std::to_string(step) + ".png"), grid);
        }
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
            save_checkpoint(models::make_generator_checkpoint(gen, "stage1", {}, {{"step", step}}),
                            out_dir / ("gen_step_" + std::to_string(step) + ".ckpt"));
        }
    }

    const std::string teacher_digest = teacher.cfg.digest();
    res.generator_ckpt = models::make_generator_checkpoint(
        gen, "stage1", {teacher_digest}, {{"steps", cfg.steps}});
    res.student_ckpt = models::make_denoiser_checkpoint(
        student, "student", {teacher_digest}, {{"steps", cfg.steps}});
    return res;
}

} // namespace gecolab::vsd
