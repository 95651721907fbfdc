// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

#include "gecolab/digest.hpp"
#include "gecolab/errors.hpp"
#include "gecolab/nn_ops.hpp"
#include "gecolab/rng.hpp"

namespace gecolab::models {

namespace {

using ad::Tape;
using ad::Var;

constexpr double kElevMin = -0.5235987755982988;  // -30 deg
constexpr double kElevMax = 0.7853981633974483;   // +45 deg

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

Var conv3(ParamBinding& P, const std::string& name, Var x) {
    return ad::conv2d(x, P(name + ".w"), P(name + ".b"), 1, 1);
}

Var gn_act(ParamBinding& P, const std::string& name, Var x, int groups) {
    return ad::silu(ad::group_norm(x, groups, P(name + ".g"), P(name + ".b")));
}

} // namespace

// ---- config ----------------------------------------------------------------

void NetConfig::validate() const {
    if (width < 1 || groups < 1 || width % groups != 0)
        throw ConfigError("NetConfig: width must be a positive multiple of groups");
    if (views < 1) throw ConfigError("NetConfig: views must be >= 1");
    if (resolution < 4 || resolution % 4 != 0)
        throw ConfigError("NetConfig: resolution must be >= 4 and divisible by 4");
    if (in_channels < 1 || out_channels < 1) throw ConfigError("NetConfig: channels must be >= 1");
    if (cond_channels < 0) throw ConfigError("NetConfig: cond_channels must be >= 0");
    if (time_dim < 0 || time_dim % 2 != 0)
        throw ConfigError("NetConfig: time_dim must be even (0 disables)");
}

nlohmann::json NetConfig::to_json() const {
    return {{"width", width},
            {"views", views},
            {"resolution", resolution},
            {"in_channels", in_channels},
            {"out_channels", out_channels},
            {"cond_channels", cond_channels},
            {"time_dim", time_dim},
            {"groups", groups}};
}

NetConfig NetConfig::from_json(const nlohmann::json& j) {
    NetConfig c;
    c.width = j.at("width").get<int>();
    c.views = j.at("views").get<int>();
    c.resolution = j.at("resolution").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.out_channels = j.at("out_channels").get<int>();
    c.cond_channels = j.at("cond_channels").get<int>();
    c.time_dim = j.at("time_dim").get<int>();
    c.groups = j.at("groups").get<int>();
    c.validate();
    return c;
}

std::string NetConfig::digest() const { return sha256_hex(to_json().dump()); }

// ---- parameters -------------------------------------------------------------

ParameterStore init_net_params(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParameterStore ps;
    RngStream rng(seed);
    auto conv = [&](const std::string& name, int cout, int cin, double gain) {
        ps.add(name + ".w", rng.normal_tensor({cout, cin, 3, 3}, gain * std::sqrt(2.0 / (9.0 * cin))));
        ps.add(name + ".b", Tensor({cout}));
    };
    auto lin_w = [&](const std::string& name, int cin, int cout, double gain) {
        ps.add(name, rng.normal_tensor({cin, cout}, gain / std::sqrt(static_cast<double>(cin))));
    };
    auto gn = [&](const std::string& name, int ch) {
        ps.add(name + ".g", Tensor::full({ch}, 1.0));
        ps.add(name + ".b", Tensor({ch}));
    };
    const int w0 = cfg.width, w1 = 2 * cfg.width, w2 = 4 * cfg.width;

    if (cfg.cond_channels > 0) conv("cond", cfg.cond_channels, 3, 1.0);
    conv("stem", w0, cfg.in_channels + cfg.cond_channels, 1.0);
    conv("enc0", w0, w0, 1.0);
    gn("gn0", w0);
    conv("enc1", w1, w0, 1.0);
    gn("gn1", w1);
    conv("enc2", w2, w1, 1.0);
    gn("gn2", w2);
    ps.add("view_emb", rng.normal_tensor({cfg.views, w2}, 0.01));
    lin_w("attn.q.w", w2, w2, 1.0);
    lin_w("attn.k.w", w2, w2, 1.0);
    lin_w("attn.v.w", w2, w2, 1.0);
    lin_w("attn.o.w", w2, w2, 0.1);
    conv("mid", w2, w2, 1.0);
    gn("gnm", w2);
    conv("dec1", w1, w2 + w1, 1.0);
    gn("gnd1", w1);
    conv("dec0", w0, w1 + w0, 1.0);
    gn("gnd0", w0);
    conv("head", cfg.out_channels, w0, 0.01);
    if (cfg.time_dim > 0) {
        const int th = 2 * cfg.width;
        lin_w("time.fc.w", cfg.time_dim, th, 1.0);
        ps.add("time.fc.b", Tensor({th}));
        // Site projections start at zero so the time path wakes up smoothly.
        for (const auto& [site, ch] : std::vector<std::pair<std::string, int>>{
                 {"e0", w0}, {"e1", w1}, {"e2", w2}, {"mid", w2}, {"d1", w1}, {"d0", w0}}) {
            ps.add("time." + site + ".w", Tensor({th, ch}));
            ps.add("time." + site + ".b", Tensor({ch}));
        }
    }
    return ps;
}

// ---- forward ----------------------------------------------------------------

Var net_forward(Tape& tape, ParamBinding& P, const NetConfig& cfg, Var x, std::optional<double> t,
                std::optional<Var> cond, bool zero_view_embedding) {
    cfg.validate();
    const Tensor& xv = x.val();
    if (xv.ndim() != 4 || xv.dim(0) != cfg.views || xv.dim(1) != cfg.in_channels ||
        xv.dim(2) != cfg.resolution || xv.dim(3) != cfg.resolution)
        throw ShapeError("net_forward: x must be [views, in_channels, res, res]");
    if (cond && cfg.cond_channels == 0)
        throw ConfigError("net_forward: condition given but cond_channels == 0");
    if (t && cfg.time_dim == 0) throw ConfigError("net_forward: t given but time_dim == 0");

    const int w0 = cfg.width, w1 = 2 * cfg.width, w2 = 4 * cfg.width;
    const int res = cfg.resolution;

    std::optional<Var> temb;
    if (cfg.time_dim > 0 && t) {
        const int half = cfg.time_dim / 2;
        Tensor e({1, cfg.time_dim});
        for (int i = 0; i < half; ++i) {
            double f = std::pow(1000.0, half == 1 ? 0.0 : static_cast<double>(i) / (half - 1));
            e[static_cast<size_t>(i)] = std::sin(*t * f);
            e[static_cast<size_t>(half + i)] = std::cos(*t * f);
        }
        temb = ad::silu(ad::linear(tape.constant(e), P("time.fc.w"), P("time.fc.b")));
    }
    auto tbias = [&](Var pre, const std::string& site, int ch) -> Var {
        if (!temb) return pre;
        Var b = ad::linear(*temb, P("time." + site + ".w"), P("time." + site + ".b"));
        return ad::add_channel_bias(pre, ad::reshape(b, {ch}));
    };

    Var xin = x;
    if (cfg.cond_channels > 0) {
        Var cf = cond ? ad::reshape(ad::silu(conv3(P, "cond", ad::reshape(*cond, {1, 3, res, res}))),
                                    {cfg.cond_channels, res, res})
                      : tape.constant(Tensor({cfg.cond_channels, res, res}));
        xin = ad::broadcast_concat_ch(x, cf);
    }

    Var h = conv3(P, "stem", xin);
    Var e0 = gn_act(P, "gn0", tbias(conv3(P, "enc0", h), "e0", w0), cfg.groups);
    Var e1 = gn_act(P, "gn1", tbias(conv3(P, "enc1", ad::avgpool2(e0)), "e1", w1), cfg.groups);
    Var e2 = gn_act(P, "gn2", tbias(conv3(P, "enc2", ad::avgpool2(e1)), "e2", w2), cfg.groups);

    Var ain = zero_view_embedding ? e2 : ad::add_view_bias(e2, P("view_emb"));
    Var pvc = ad::vchw_to_pvc(ain);
    Var q = ad::linear_nobias(pvc, P("attn.q.w"));
    Var k = ad::linear_nobias(pvc, P("attn.k.w"));
    Var v = ad::linear_nobias(pvc, P("attn.v.w"));
    Var weights = ad::softmax_lastdim(ad::scale(ad::bmm_bt(q, k), 1.0 / std::sqrt(w2)));
    Var mixed = ad::linear_nobias(ad::bmm(weights, v), P("attn.o.w"));
    Var a2 = ad::add(e2, ad::pvc_to_vchw(mixed, res / 4, res / 4));

    Var m2 = gn_act(P, "gnm", tbias(conv3(P, "mid", a2), "mid", w2), cfg.groups);
    Var f1 = gn_act(P, "gnd1",
                    tbias(conv3(P, "dec1", ad::concat_ch(ad::upsample_nearest2(m2), e1)), "d1", w1),
                    cfg.groups);
    Var f0 = gn_act(P, "gnd0",
                    tbias(conv3(P, "dec0", ad::concat_ch(ad::upsample_nearest2(f1), e0)), "d0", w0),
                    cfg.groups);
    return conv3(P, "head", f0);
}

// ---- denoiser -----------------------------------------------------------------

Tensor Denoiser::predict(const Tensor& x, double t, const Tensor* condition) const {
    Tape tape;
    ParamBinding pb(tape, const_cast<ParameterStore&>(params), false);
    std::optional<Var> cv;
    if (condition != nullptr) cv = tape.constant(*condition);
    return predict_var(tape, pb, tape.constant(x), t, cv).val();
}

Var Denoiser::predict_var(Tape& tape, ParamBinding& params_binding, Var x, double t,
                          std::optional<Var> condition) const {
    if (t < schedule.t_min || t > schedule.t_max)
        throw ConfigError("Denoiser: t outside schedule range");
    ++evals;
    return net_forward(tape, params_binding, cfg, x, t, condition);
}

diffusion::DenoiserHandle Denoiser::handle() const {
    diffusion::DenoiserHandle h;
    h.kind = kind;
    h.fn = [this](const Tensor& x, double t, const Tensor* c) { return predict(x, t, c); };
    return h;
}

Denoiser make_teacher(const NetConfig& cfg, const diffusion::DiffusionSchedule& schedule,
                      uint64_t seed) {
    cfg.validate();
    Denoiser d;
    d.cfg = cfg;
    d.schedule = schedule;
    d.kind = diffusion::PredictionKind::V;
    d.params = init_net_params(cfg, seed);
    return d;
}

Denoiser make_student_from_teacher(const Denoiser& teacher) {
    Denoiser s = teacher;
    s.evals = 0;
    return s;
}

// ---- generator -----------------------------------------------------------------

Tensor Generator::generate(const Tensor& z, const Tensor& cond) const {
    Tape tape;
    ParamBinding pb(tape, const_cast<ParameterStore&>(params), false);
    return generate_var(tape, pb, z, cond).val();
}

Var Generator::generate_var(Tape& tape, ParamBinding& params_binding, const Tensor& z,
                            const Tensor& cond) const {
    ++evals;
    Var v_pred = net_forward(tape, params_binding, cfg, tape.constant(z), t_gen,
                             tape.constant(cond));
    // V-to-X0 at x_t = z: x0 = alpha*z - sigma*v. No division, so no guard.
    Tensor az = z;
    az *= schedule.alpha(t_gen);
    Var x0 = ad::add_const(ad::scale(v_pred, -schedule.sigma(t_gen)), az);
    return ad::soft_clamp_unit(x0);
}

Generator init_generator_from_teacher(const Denoiser& teacher) {
    if (teacher.kind != diffusion::PredictionKind::V)
        throw ConfigError("init_generator_from_teacher: teacher must be V-parameterized");
    Generator g;
    g.cfg = teacher.cfg;
    g.schedule = teacher.schedule;
    g.t_gen = teacher.schedule.t_max;
    g.params = teacher.params;
    return g;
}

// ---- reconstructor ---------------------------------------------------------------

Tensor ray_embedding(const scene::CameraPose& pose) {
    Tensor emb({6, pose.height, pose.width});
    const size_t hw = static_cast<size_t>(pose.height) * pose.width;
    Vec3 o, d;
    for (int y = 0; y < pose.height; ++y) {
        for (int x = 0; x < pose.width; ++x) {
            pose.pixel_ray(x, y, o, d);
            const size_t idx = static_cast<size_t>(y) * pose.width + x;
            for (int c = 0; c < 3; ++c) {
                emb[static_cast<size_t>(c) * hw + idx] = o[c];
                emb[static_cast<size_t>(3 + c) * hw + idx] = d[c];
            }
        }
    }
    return emb;
}

std::vector<splat::SplatterImage> Reconstructor::reconstruct(
    const scene::MultiViewImageSet& views) const {
    views.validate();
    const int v_count = views.images.dim(0);
    const int hh = views.images.dim(2), ww = views.images.dim(3);
    Tape scratch;
    ParamBinding pbs(scratch, const_cast<ParameterStore&>(params), false);
    std::vector<Tensor> rays;
    rays.reserve(static_cast<size_t>(v_count));
    for (int v = 0; v < v_count; ++v) rays.push_back(ray_embedding(views.rig.poses[static_cast<size_t>(v)]));
    Tensor rays_t({v_count, 6, hh, ww});
    for (int v = 0; v < v_count; ++v)
        std::copy_n(rays[static_cast<size_t>(v)].data(), rays[static_cast<size_t>(v)].size(),
                    rays_t.data() + static_cast<size_t>(v) * 6 * hh * ww);
    Var xin = ad::concat_ch(scratch.constant(views.images), scratch.constant(rays_t));
    ++evals;
    Var raw = net_forward(scratch, pbs, cfg, xin, std::nullopt, std::nullopt);
    const Tensor& rv = raw.val();
    std::vector<splat::SplatterImage> out(static_cast<size_t>(v_count));
    const size_t per = static_cast<size_t>(cfg.out_channels) * hh * ww;
    for (int v = 0; v < v_count; ++v) {
        Tensor grid({cfg.out_channels, hh, ww});
        std::copy_n(rv.data() + static_cast<size_t>(v) * per, per, grid.data());
        out[static_cast<size_t>(v)].raw = std::move(grid);
        out[static_cast<size_t>(v)].camera = views.rig.poses[static_cast<size_t>(v)];
    }
    return out;
}

Var Reconstructor::reconstruct_var(Tape& tape, ParamBinding& params_binding, Var images,
                                   const scene::CameraRig& rig) const {
    const Tensor& iv = images.val();
    if (iv.ndim() != 4 || iv.dim(1) != 3) throw ShapeError("reconstruct_var: images must be [V,3,H,W]");
    const int v_count = iv.dim(0), hh = iv.dim(2), ww = iv.dim(3);
    if (static_cast<int>(rig.poses.size()) != v_count)
        throw ShapeError("reconstruct_var: rig does not match image count");
    Tensor rays_t({v_count, 6, hh, ww});
    for (int v = 0; v < v_count; ++v) {
        Tensor r = ray_embedding(rig.poses[static_cast<size_t>(v)]);
        std::copy_n(r.data(), r.size(), rays_t.data() + static_cast<size_t>(v) * 6 * hh * ww);
    }
    ++evals;
    Var raw = net_forward(tape, params_binding, cfg,
                          ad::concat_ch(images, tape.constant(rays_t)), std::nullopt, std::nullopt);
    std::vector<Var> packed;
    packed.reserve(static_cast<size_t>(v_count));
    for (int v = 0; v < v_count; ++v) {
        Var grid = ad::reshape(ad::slice_rows(raw, v, v + 1), {cfg.out_channels, hh, ww});
        packed.push_back(splat::activate_splatter_var(grid, rig.poses[static_cast<size_t>(v)]));
    }
    return packed.size() == 1 ? packed[0] : ad::concat_rows(packed);
}

Reconstructor make_reconstructor(const NetConfig& cfg, uint64_t seed) {
    NetConfig rc = cfg;
    rc.in_channels = 9;   // RGB + ray origin + ray direction
    rc.out_channels = 12;
    rc.cond_channels = 0;
    rc.time_dim = 0;
    rc.validate();
    Reconstructor r;
    r.cfg = rc;
    r.params = init_net_params(rc, seed);
    // Head bias picks the activation fixed point: small Gaussians (scale
    // exp(log 0.05)) with identity-leaning quaternions. Without this the
    // initial splats cover whole images and rasterization cost explodes.
    Tensor& hb = r.params.get("head.b");
    hb[1] = std::log(0.05);
    hb[2] = std::log(0.05);
    hb[3] = std::log(0.05);
    hb[4] = 1.0;  // quaternion w
    return r;
}

// ---- training ---------------------------------------------------------------------

StepStats teacher_step(Denoiser& teacher, const Tensor& views, const Tensor* condition, double t,
                       const Tensor& eps, Adam& opt) {
    if (!views.same_shape(eps)) throw ShapeError("teacher_step: eps shape mismatch");
    Tape tape;
    ParamBinding pb(tape, teacher.params, true);
    Tensor x_t = diffusion::add_noise(views, eps, t, teacher.schedule);
    const double a = teacher.schedule.alpha(t), s = teacher.schedule.sigma(t);
    Tensor v_target = eps;
    v_target *= a;
    Tensor sx = views;
    sx *= s;
    v_target -= sx;
    std::optional<Var> cv;
    if (condition != nullptr) cv = tape.constant(*condition);
    Var pred = teacher.predict_var(tape, pb, tape.constant(x_t), t, cv);
    Var loss = ad::mse_const(pred, v_target);
    tape.backward(loss);
    StepStats st;
    st.loss = loss.val()[0];
    std::vector<Tensor> grads = pb.collect_grads();
    st.grad_norm = grad_norm(grads);
    if (!std::isfinite(st.loss) || !std::isfinite(st.grad_norm))
        throw NumericError("teacher_step: non-finite loss or gradient");
    opt.step(teacher.params, grads);
    return st;
}

StepStats reconstructor_step(Reconstructor& recon, const scene::MultiViewImageSet& views,
                             const std::vector<std::pair<scene::CameraPose, Tensor>>& targets,
                             const metrics::PerceptualNet& perceptual, double lambda,
                             const splat::RasterConfig& raster, Adam& opt) {
    if (targets.empty()) throw ConfigError("reconstructor_step: no targets");
    Tape tape;
    ParamBinding pb(tape, recon.params, true);
    Var packed = recon.reconstruct_var(tape, pb, tape.constant(views.images), views.rig);
    Var loss = tape.constant(Tensor::scalar(0.0));
    for (const auto& [pose, gt] : targets) {
        Var out = splat::rasterize_var(packed, pose, raster);
        Var rgb = ad::slice_rows(out, 0, 3);
        Var term = ad::mse_const(rgb, gt);
        if (lambda > 0.0) term = ad::add(term, ad::scale(perceptual.distance_var(tape, rgb, gt), lambda));
        loss = ad::add(loss, term);
    }
    loss = ad::scale(loss, 1.0 / static_cast<double>(targets.size()));
    tape.backward(loss);
    StepStats st;
    st.loss = loss.val()[0];
    std::vector<Tensor> grads = pb.collect_grads();
    st.grad_norm = grad_norm(grads);
    if (!std::isfinite(st.loss) || !std::isfinite(st.grad_norm))
        throw NumericError("reconstructor_step: non-finite loss or gradient");
    opt.step(recon.params, grads);
    return st;
}

Checkpoint train_teacher(const scene::DatasetManifest& data, Denoiser& teacher,
                         const TeacherTrainConfig& cfg, const LogSink& log) {
    if (data.n_scenes < 1) throw ConfigError("train_teacher: empty dataset");
    if (cfg.steps < 1) throw ConfigError("train_teacher: steps must be >= 1");
    std::vector<scene::SceneData> cache;
    cache.reserve(static_cast<size_t>(data.n_scenes));
    for (int i = 0; i < data.n_scenes; ++i) cache.push_back(scene::load_scene_data(data, i));

    RngStream rng(cfg.seed);
    Adam opt({cfg.lr, 0.9, 0.999, 1e-8});
    double last_loss = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        const double t0 = now_ms();
        const scene::SceneData& sd = cache[static_cast<size_t>(rng.uniform_int(0, data.n_scenes - 1))];
        const double t = rng.uniform(teacher.schedule.t_min, teacher.schedule.t_max);
        Tensor eps = rng.normal_tensor(sd.views.images.shape());
        const bool drop = rng.uniform() < cfg.cond_dropout;
        StepStats st;
        try {
            st = teacher_step(teacher, sd.views.images, drop ? nullptr : &sd.condition, t, eps, opt);
        } catch (const NumericError& e) {
            throw NumericError("train_teacher: aborted at step " + std::to_string(step) + ": " +
                               e.what());
        }
        last_loss = st.loss;
        if (log && (step % cfg.log_every == 0 || step == cfg.steps - 1))
            log({{"step", step},
                 {"loss", st.loss},
                 {"grad_norm", st.grad_norm},
                 {"wall_ms", now_ms() - t0}});
    }
    return make_denoiser_checkpoint(teacher, "teacher", {},
                                    {{"final_loss", last_loss}, {"steps", cfg.steps}});
}

Checkpoint pretrain_reconstructor(const scene::DatasetManifest& data, Reconstructor& recon,
                                  const ReconTrainConfig& cfg, const LogSink& log) {
    if (data.n_scenes < 1) throw ConfigError("pretrain_reconstructor: empty dataset");
    if (cfg.steps < 1) throw ConfigError("pretrain_reconstructor: steps must be >= 1");
    std::vector<scene::SceneData> cache;
    std::vector<scene::SceneSpec> specs;
    cache.reserve(static_cast<size_t>(data.n_scenes));
    specs.reserve(static_cast<size_t>(data.n_scenes));
    for (int i = 0; i < data.n_scenes; ++i) {
        cache.push_back(scene::load_scene_data(data, i));
        specs.push_back(scene::sample_scene(data.scene_seeds[static_cast<size_t>(i)]));
    }
    const scene::CameraPose& p0 = data.rig.poses.at(0);
    const double radius = p0.position.norm();
    const int hh = p0.height, ww = p0.width;
    const int n_views = static_cast<int>(data.rig.poses.size());
    const metrics::PerceptualNet net;

    RngStream rng(cfg.seed);
    Adam opt({cfg.lr, 0.9, 0.999, 1e-8});
    double last_loss = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        const double t0 = now_ms();
        const int si = rng.uniform_int(0, data.n_scenes - 1);
        const scene::SceneData& sd = cache[static_cast<size_t>(si)];
        std::vector<std::pair<scene::CameraPose, Tensor>> targets;
        // Two held-in rig views keep the identity mapping anchored; novel
        // poses supervise the geometry the splats must carry.
        for (int j = 0; j < 2; ++j) {
            const int v = rng.uniform_int(0, n_views - 1);
            Tensor gt({3, hh, ww});
            std::copy_n(sd.views.images.data() + static_cast<size_t>(v) * 3 * hh * ww, gt.size(),
                        gt.data());
            targets.emplace_back(data.rig.poses[static_cast<size_t>(v)], gt);
        }
        for (int j = 0; j < cfg.novel_views_per_step; ++j) {
            scene::CameraPose pose = scene::sample_random_pose(
                derive_seed(cfg.seed, 0xb0b0ULL + 977ULL * static_cast<uint64_t>(step) + static_cast<uint64_t>(j)),
                radius, radius, kElevMin, kElevMax, p0.fov_y, hh, ww);
            targets.emplace_back(pose, scene::ray_trace(specs[static_cast<size_t>(si)], pose));
        }
        StepStats st;
        try {
            st = reconstructor_step(recon, sd.views, targets, net, cfg.lambda_perceptual,
                                    cfg.raster, opt);
        } catch (const NumericError& e) {
            throw NumericError("pretrain_reconstructor: aborted at step " + std::to_string(step) +
                               ": " + e.what());
        }
        last_loss = st.loss;
        if (log && (step % cfg.log_every == 0 || step == cfg.steps - 1))
            log({{"step", step},
                 {"loss", st.loss},
                 {"grad_norm", st.grad_norm},
                 {"wall_ms", now_ms() - t0}});
    }
    return make_reconstructor_checkpoint(recon, "reconstructor", {},
                                         {{"final_loss", last_loss}, {"steps", cfg.steps}});
}

// ---- checkpoints ---------------------------------------------------------------

nlohmann::json schedule_to_json(const diffusion::DiffusionSchedule& s) {
    return {{"kind", diffusion::to_string(s.kind)},
            {"t_min", s.t_min},
            {"t_max", s.t_max},
            {"beta_min", s.beta_min},
            {"beta_max", s.beta_max}};
}

diffusion::DiffusionSchedule schedule_from_json(const nlohmann::json& j) {
    return diffusion::make_schedule(diffusion::schedule_kind_from_string(j.at("kind").get<std::string>()),
                                    j.at("t_min").get<double>(), j.at("t_max").get<double>(),
                                    j.at("beta_min").get<double>(), j.at("beta_max").get<double>());
}

namespace {

nlohmann::json base_header(const std::string& kind, const std::string& stage, const NetConfig& cfg,
                           const std::vector<std::string>& parents, const nlohmann::json& metrics) {
    return {{"schema_version", 1},
            {"kind", kind},
            {"stage", stage},
            {"config", cfg.to_json()},
            {"config_digest", cfg.digest()},
            {"parent_digests", parents},
            {"metrics", metrics.is_null() ? nlohmann::json::object() : metrics}};
}

NetConfig checked_config(const nlohmann::json& header, const char* who, bool force) {
    NetConfig cfg = NetConfig::from_json(header.at("config"));
    const std::string stored = header.at("config_digest").get<std::string>();
    if (cfg.digest() != stored && !force)
        throw ConfigError(std::string(who) + ": config digest mismatch (use force to override)");
    return cfg;
}

void check_kind(const nlohmann::json& header, const std::string& want, const char* who) {
    const std::string got = header.at("kind").get<std::string>();
    if (got != want)
        throw StorageError(std::string(who) + ": checkpoint kind is '" + got + "', wanted '" +
                           want + "'");
}

} // namespace

Checkpoint make_denoiser_checkpoint(const Denoiser& d, const std::string& stage,
                                    const std::vector<std::string>& parent_digests,
                                    const nlohmann::json& metrics_snapshot) {
    Checkpoint ck;
    ck.header = base_header("denoiser", stage, d.cfg, parent_digests, metrics_snapshot);
    ck.header["schedule"] = schedule_to_json(d.schedule);
    ck.header["prediction_kind"] = diffusion::to_string(d.kind);
    ck.params = d.params;
    return ck;
}

Checkpoint make_generator_checkpoint(const Generator& g, const std::string& stage,
                                     const std::vector<std::string>& parent_digests,
                                     const nlohmann::json& metrics_snapshot) {
    Checkpoint ck;
    ck.header = base_header("generator", stage, g.cfg, parent_digests, metrics_snapshot);
    ck.header["schedule"] = schedule_to_json(g.schedule);
    ck.header["t_gen"] = g.t_gen;
    ck.params = g.params;
    return ck;
}

Checkpoint make_reconstructor_checkpoint(const Reconstructor& r, const std::string& stage,
                                         const std::vector<std::string>& parent_digests,
                                         const nlohmann::json& metrics_snapshot) {
    Checkpoint ck;
    ck.header = base_header("reconstructor", stage, r.cfg, parent_digests, metrics_snapshot);
    ck.params = r.params;
    return ck;
}

Denoiser load_denoiser(const std::filesystem::path& path, bool force) {
    Checkpoint ck = load_checkpoint(path);
    check_kind(ck.header, "denoiser", "load_denoiser");
    Denoiser d;
    d.cfg = checked_config(ck.header, "load_denoiser", force);
    d.schedule = schedule_from_json(ck.header.at("schedule"));
    d.kind = diffusion::prediction_kind_from_string(ck.header.at("prediction_kind").get<std::string>());
    d.params = std::move(ck.params);
    if (!d.params.all_finite()) throw NumericError("load_denoiser: non-finite parameters");
    return d;
}

Generator load_generator(const std::filesystem::path& path, bool force) {
    Checkpoint ck = load_checkpoint(path);
    check_kind(ck.header, "generator", "load_generator");
    Generator g;
    g.cfg = checked_config(ck.header, "load_generator", force);
    g.schedule = schedule_from_json(ck.header.at("schedule"));
    g.t_gen = ck.header.at("t_gen").get<double>();
    g.params = std::move(ck.params);
    if (!g.params.all_finite()) throw NumericError("load_generator: non-finite parameters");
    return g;
}

Reconstructor load_reconstructor(const std::filesystem::path& path, bool force) {
    Checkpoint ck = load_checkpoint(path);
    check_kind(ck.header, "reconstructor", "load_reconstructor");
    Reconstructor r;
    r.cfg = checked_config(ck.header, "load_reconstructor", force);
    r.params = std::move(ck.params);
    if (!r.params.all_finite()) throw NumericError("load_reconstructor: non-finite parameters");
    return r;
}

} // namespace gecolab::models
