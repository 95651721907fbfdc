// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gecolab/scene.hpp"
#include "gecolab/tape.hpp"
#include "gecolab/tensor.hpp"

namespace gecolab::metrics {

// Images are [3,H,W] (or [H,W]) in [-1,1]; metrics rescale to [0,1]
// internally. Identical inputs give +inf (flagged "identical" in reports).
double psnr(const Tensor& a, const Tensor& b);

// Standard single-scale SSIM: 11x11 Gaussian window sigma 1.5, C1=0.01^2,
// C2=0.03^2 on the [0,1] scale, valid windows only, channel-averaged.
double ssim(const Tensor& a, const Tensor& b);

// Deterministic seeded random-feature perceptual distance: three frozen conv
// layers, channel-unit-normalized features, mean squared feature difference
// averaged over layers. Stand-in with the same call shape as LPIPS backends.
class PerceptualNet {
public:
    explicit PerceptualNet(uint64_t seed = kDefaultSeed);

    double distance(const Tensor& a, const Tensor& b) const;
    // Differentiable in `a`; `b` is a constant target.
    ad::Var distance_var(ad::Tape& tape, ad::Var a, const Tensor& b) const;

    static constexpr uint64_t kDefaultSeed = 0x9e3779b97f4a7c15ull;

private:
    ad::Var features_sq_diff(ad::Tape& t, ad::Var a, const Tensor& b) const;
    Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

// Convenience wrapper over a process-wide default-seed net.
double perceptual(const Tensor& a, const Tensor& b);

struct SceneMetrics {
    double psnr = 0;
    double ssim = 0;
    double perceptual = 0;
    bool identical = false;  // psnr overflowed (MSE = 0)
};

struct MetricsReport {
    int schema_version = 1;
    std::string protocol;  // "sixview" or "ring15"
    std::map<std::string, SceneMetrics> per_scene;
    SceneMetrics aggregate;
    double t_multiview_ms = 0;
    double t_reconstruct_ms = 0;

    void finalize();  // recompute aggregate from per_scene
    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);
    std::string table() const;  // aligned human-readable text
};

// Renders predictions for one scene at the protocol rig; provided by the
// pipeline layer so this module stays free of model dependencies.
using ScenePredictor =
    std::function<Tensor(const Tensor& condition, uint64_t scene_seed, const scene::CameraRig& rig)>;

// Runs the paper protocol over held-out scenes: GT comes from the analytic
// ray tracer at the protocol poses; predictions from `predict`.
MetricsReport evaluate(const ScenePredictor& predict, const scene::DatasetManifest& data,
                       const std::string& protocol, const PerceptualNet& net);

// Aligned comparison of runs sharing protocol and scene set: per-metric
// values and deltas vs the first run.
nlohmann::json compare_runs(const std::vector<std::pair<std::string, MetricsReport>>& runs);

struct DiversityStats {
    double mean_pairwise_l2 = 0;
    std::vector<double> per_pose;
};

// Mean pairwise L2 between renders across seeds at unseen poses.
DiversityStats diversity_stats(
    const std::function<Tensor(uint64_t z_seed, const scene::CameraPose& pose)>& render,
    const std::vector<uint64_t>& z_seeds, const std::vector<scene::CameraPose>& poses);

} // namespace gecolab::metrics
