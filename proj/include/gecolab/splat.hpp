// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "gecolab/geometry.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/tape.hpp"
#include "gecolab/tensor.hpp"

namespace gecolab::splat {

struct Gaussian {
    Vec3 position = Vec3::Zero();
    Vec3 scale = Vec3::Ones() * 0.01;  // standard deviations
    Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion
    double opacity = 0.5;
    Vec3 color = Vec3(0.5, 0.5, 0.5);  // [0,1]

    void validate() const;
};

enum class GaussianSource { Fused, Loaded };

struct GaussianSet {
    std::vector<Gaussian> gaussians;
    GaussianSource source = GaussianSource::Fused;

    size_t size() const { return gaussians.size(); }
    void validate() const;
};

// Packed parameter layout, one row per Gaussian:
// [pos.xyz, scale.xyz, quat.wxyz, opacity, rgb] = 14 fields.
inline constexpr int kPackedFields = 14;
Tensor pack_gaussians(const GaussianSet& set);
GaussianSet unpack_gaussians(const Tensor& packed, GaussianSource source);

// Raw splatter channels: depth-offset, scale-logits x3, rotation x4,
// opacity-logit, color-logits x3.
inline constexpr int kRawChannels = 12;

struct SplatterImage {
    Tensor raw;  // [12, H, W]
    scene::CameraPose camera;

    void validate() const;
};

// Per-cell activation: position = origin + ray_dir * (d0 + softplus(offset))
// with d0 = camera distance to origin; scale = exp(clamped logit);
// rotation = normalized; opacity/color = logistic.
std::vector<Gaussian> activate_splatter(const SplatterImage& raw);
// Graph version; raw_grid is [12,H,W], result is packed [H*W, 14].
ad::Var activate_splatter_var(ad::Var raw_grid, const scene::CameraPose& camera);

GaussianSet fuse_splatter_images(const std::vector<SplatterImage>& splats);

struct RasterConfig {
    double cut_sigma = 3.0;      // Mahalanobis cut radius; config-exposed (biases gradients)
    double near_plane = 0.01;
    double bg_unit = scene::kBackgroundUnit;
    double cov_reg = 1e-6;
};

struct Projection {
    double mean_x = 0, mean_y = 0, depth = 0;
    double cov_a = 0, cov_b = 0, cov_c = 0;  // 2x2 [[a,b],[b,c]] after regularization
};

// EWA projection; nullopt when the Gaussian is behind the near plane (culled).
std::optional<Projection> project_gaussian(const Gaussian& g, const scene::CameraPose& pose,
                                           const RasterConfig& cfg = {});

struct RasterOutput {
    Tensor image;  // [3,H,W] in [-1,1]
    Tensor alpha;  // [H,W] in [0,1]
};

RasterOutput rasterize(const GaussianSet& set, const scene::CameraPose& pose,
                       const RasterConfig& cfg = {});

// Differentiable node over packed [N,14] parameters; output [4,H,W]
// (rgb in [-1,1] then alpha). Backward is hand-derived, covering position,
// scale, rotation (through normalization), opacity, and color.
ad::Var rasterize_var(ad::Var packed, const scene::CameraPose& pose,
                      const RasterConfig& cfg = {});

int raster_skip_warnings();
void reset_raster_skip_warnings();

// GSPL binary: "GSPL" | u32 version | u64 count | count x 14 float32.
void export_gaussians(const GaussianSet& set, const std::filesystem::path& path);
GaussianSet import_gaussians(const std::filesystem::path& path);
void dump_gaussians_ascii(const GaussianSet& set, const std::filesystem::path& path);

} // namespace gecolab::splat
