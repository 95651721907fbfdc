// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gecolab/geometry.hpp"
#include "gecolab/tensor.hpp"

namespace gecolab::scene {

// Background gray convention: 127/255 in unit range, applied identically by
// the ray tracer and the rasterizer.
inline constexpr double kBackgroundUnit = 127.0 / 255.0;
inline constexpr double kBackgroundSigned = 2.0 * kBackgroundUnit - 1.0;

// Camera frame: x right, y up, z forward (into the scene). rotation maps
// world to camera; rows are the camera axes in world coordinates.
struct CameraPose {
    Mat3 rotation = Mat3::Identity();
    Vec3 position = Vec3::Zero();
    double fov_y = 0.8726646259971648;  // 50 degrees
    int height = 64;
    int width = 64;

    void validate() const;  // orthonormal, det +1, fov in (0, pi)
    Vec3 forward() const { return rotation.row(2).transpose(); }
    // Primary ray through pixel center (px, py); direction is unit length.
    void pixel_ray(double px, double py, Vec3& origin, Vec3& dir) const;
    // Projects a world point; returns false if behind the camera.
    bool project(const Vec3& p, double& px, double& py, double& depth) const;
    double focal_px() const { return 0.5 * height / std::tan(0.5 * fov_y); }

    nlohmann::json to_json() const;
    static CameraPose from_json(const nlohmann::json& j);
};

CameraPose look_at(const Vec3& eye, const Vec3& target, double fov_y, int height, int width);

struct CameraRig {
    std::vector<CameraPose> poses;
    std::string name;

    int size() const { return static_cast<int>(poses.size()); }
    void validate() const;  // nonempty, shared resolution, aimed at origin

    nlohmann::json to_json() const;
    static CameraRig from_json(const nlohmann::json& j);
};

enum class PrimitiveShape { Sphere, Box, Capsule };

const char* to_string(PrimitiveShape s);
PrimitiveShape primitive_shape_from_string(const std::string& s);

struct Primitive {
    PrimitiveShape shape = PrimitiveShape::Sphere;
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3::Ones();  // sphere: semi-axes; box: half-extents; capsule: (r, r, half-len)
    Vec3 albedo = Vec3::Ones();
    Vec4 rotation = Vec4(1, 0, 0, 0);  // unit quaternion, local -> world
};

struct SceneSpec {
    std::vector<Primitive> primitives;
    uint64_t seed = 0;

    void validate() const;  // 1..4 primitives, bounded in unit sphere, >=2 albedos
    // Conservative bounding radius from origin.
    double bounding_radius() const;
};

SceneSpec sample_scene(uint64_t seed);

struct MultiViewImageSet {
    Tensor images;  // [V, 3, H, W] in [-1, 1]
    CameraRig rig;
    std::optional<int> condition_index;

    void validate() const;
};

// Analytic ray tracer: nearest-hit Lambertian shading with one fixed
// directional light; misses are exactly kBackgroundSigned.
Tensor ray_trace(const SceneSpec& spec, const CameraPose& pose);
// Hit mask variant used by silhouette tests: 1 where a primary ray hits.
Tensor hit_mask(const SceneSpec& spec, const CameraPose& pose);

struct RigParams {
    int count = 15;        // ring only
    double radius = 2.4;
    double fov_y = 0.8726646259971648;
    int height = 64;
    int width = 64;
};

CameraRig make_rig(const std::string& kind, const RigParams& params);

CameraPose sample_random_pose(uint64_t seed, double radius_min, double radius_max,
                              double elev_min, double elev_max, double fov_y, int height,
                              int width);

struct DatasetManifest {
    int schema_version = 1;
    int n_scenes = 0;
    uint64_t seed = 0;
    CameraRig rig;
    CameraPose condition_pose;
    std::vector<uint64_t> scene_seeds;
    std::vector<std::string> scene_ids;
    std::filesystem::path root;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j, std::filesystem::path root);
};

// Layout: manifest.json, scenes/<id>/cond.png, view_<k>.png, pose_<k>.json.
DatasetManifest build_dataset(int n_scenes, const CameraRig& rig, uint64_t seed,
                              const std::filesystem::path& out_path);
DatasetManifest load_manifest(const std::filesystem::path& dataset_path);

struct SceneData {
    Tensor condition;  // [3, H, W]
    MultiViewImageSet views;
};

SceneData load_scene_data(const DatasetManifest& m, int index);

} // namespace gecolab::scene
