// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#include "gecolab/scene.hpp"

#include <cmath>
#include <fstream>

#include "gecolab/errors.hpp"
#include "gecolab/image_io.hpp"
#include "gecolab/rng.hpp"

namespace gecolab::scene {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRayEps = 1e-6;

// Fixed directional light (direction toward the light).
const Vec3 kLightDir = Vec3(0.4, 0.8, 0.45).normalized();

} // namespace

void CameraPose::validate() const {
    Mat3 rtr = rotation.transpose() * rotation;
    if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw NumericError("camera rotation not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-6)
        throw NumericError("camera rotation determinant != +1");
    if (!(fov_y > 0.0 && fov_y < kPi)) throw ConfigError("fov_y outside (0, pi)");
    if (height < 1 || width < 1) throw ConfigError("bad camera resolution");
}

void CameraPose::pixel_ray(double px, double py, Vec3& origin, Vec3& dir) const {
    double tan_half = std::tan(0.5 * fov_y);
    double xc = (px + 0.5 - 0.5 * width) / (0.5 * height) * tan_half;
    double yc = (0.5 * height - (py + 0.5)) / (0.5 * height) * tan_half;
    origin = position;
    dir = (rotation.transpose() * Vec3(xc, yc, 1.0)).normalized();
}

bool CameraPose::project(const Vec3& p, double& px, double& py, double& depth) const {
    Vec3 pc = rotation * (p - position);
    if (pc.z() <= 1e-9) return false;
    double focal = focal_px();
    px = 0.5 * width - 0.5 + focal * pc.x() / pc.z();
    py = 0.5 * height - 0.5 - focal * pc.y() / pc.z();
    depth = pc.z();
    return true;
}

nlohmann::json CameraPose::to_json() const {
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot[static_cast<size_t>(3 * r + c)] = rotation(r, c);
    return {{"rotation", rot},
            {"position", {position.x(), position.y(), position.z()}},
            {"fov_y", fov_y},
            {"resolution", {height, width}}};
}

CameraPose CameraPose::from_json(const nlohmann::json& j) {
    CameraPose p;
    auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw StorageError("pose json: rotation must have 9 entries");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot[static_cast<size_t>(3 * r + c)];
    auto pos = j.at("position").get<std::vector<double>>();
    if (pos.size() != 3) throw StorageError("pose json: position must have 3 entries");
    p.position = Vec3(pos[0], pos[1], pos[2]);
    p.fov_y = j.at("fov_y").get<double>();
    auto res = j.at("resolution").get<std::vector<int>>();
    if (res.size() != 2) throw StorageError("pose json: resolution must have 2 entries");
    p.height = res[0];
    p.width = res[1];
    p.validate();
    return p;
}

CameraPose look_at(const Vec3& eye, const Vec3& target, double fov_y, int height, int width) {
    Vec3 f = (target - eye).normalized();
    Vec3 up = std::abs(f.y()) > 0.999 ? Vec3(0, 0, 1) : Vec3(0, 1, 0);
    Vec3 r = up.cross(f).normalized();
    Vec3 u = f.cross(r);
    CameraPose p;
    p.rotation.row(0) = r.transpose();
    p.rotation.row(1) = u.transpose();
    p.rotation.row(2) = f.transpose();
    p.position = eye;
    p.fov_y = fov_y;
    p.height = height;
    p.width = width;
    return p;
}

void CameraRig::validate() const {
    if (poses.empty()) throw ConfigError("rig has no poses");
    for (const auto& p : poses) {
        p.validate();
        if (p.height != poses[0].height || p.width != poses[0].width)
            throw ConfigError("rig poses disagree on resolution");
        // Distance from the forward axis to the origin.
        double d = p.position.cross(p.forward()).norm();
        if (d > 1e-6) throw NumericError("rig pose does not aim at the origin");
    }
}

nlohmann::json CameraRig::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : poses) arr.push_back(p.to_json());
    return {{"name", name}, {"poses", arr}};
}

CameraRig CameraRig::from_json(const nlohmann::json& j) {
    CameraRig r;
    r.name = j.at("name").get<std::string>();
    for (const auto& pj : j.at("poses")) r.poses.push_back(CameraPose::from_json(pj));
    return r;
}

const char* to_string(PrimitiveShape s) {
    switch (s) {
        case PrimitiveShape::Sphere: return "sphere";
        case PrimitiveShape::Box: return "box";
        case PrimitiveShape::Capsule: return "capsule";
    }
    return "?";
}

PrimitiveShape primitive_shape_from_string(const std::string& s) {
    if (s == "sphere") return PrimitiveShape::Sphere;
    if (s == "box") return PrimitiveShape::Box;
    if (s == "capsule") return PrimitiveShape::Capsule;
    throw ConfigError("unknown primitive shape: " + s);
}

namespace {

double primitive_extent(const Primitive& p) {
    switch (p.shape) {
        case PrimitiveShape::Sphere: return p.size.maxCoeff();
        case PrimitiveShape::Box: return p.size.norm();
        case PrimitiveShape::Capsule: return p.size.z() + p.size.x();
    }
    return 0.0;
}

} // namespace

double SceneSpec::bounding_radius() const {
    double r = 0.0;
    for (const auto& p : primitives) r = std::max(r, p.center.norm() + primitive_extent(p));
    return r;
}

void SceneSpec::validate() const {
    if (primitives.empty() || primitives.size() > 4)
        throw ConfigError("scene must have 1..4 primitives");
    if (bounding_radius() > 1.0 + 1e-9) throw NumericError("scene exceeds unit sphere");
    for (const auto& p : primitives) {
        if (p.size.minCoeff() <= 0.0) throw NumericError("primitive size must be positive");
        if (std::abs(Vec4(p.rotation).norm() - 1.0) > 1e-6)
            throw NumericError("primitive rotation not unit quaternion");
        if (p.albedo.minCoeff() < 0.0 || p.albedo.maxCoeff() > 1.0)
            throw NumericError("albedo outside [0,1]");
    }
    if (primitives.size() >= 2) {
        bool distinct = false;
        for (size_t i = 0; i + 1 < primitives.size() && !distinct; ++i)
            for (size_t j = i + 1; j < primitives.size(); ++j)
                if ((primitives[i].albedo - primitives[j].albedo).cwiseAbs().maxCoeff() > 0.05) {
                    distinct = true;
                    break;
                }
        if (!distinct) throw NumericError("scene albedos are not distinct");
    }
}

SceneSpec sample_scene(uint64_t seed) {
    RngStream rng(derive_seed(seed, 0x5ce9e5eedULL));
    SceneSpec spec;
    spec.seed = seed;
    int count = 2 + static_cast<int>(rng.uniform() * 3.0);  // 2..4
    if (count > 4) count = 4;
    for (int i = 0; i < count; ++i) {
        Primitive p;
        double shape_u = rng.uniform();
        p.shape = shape_u < 1.0 / 3 ? PrimitiveShape::Sphere
                                    : (shape_u < 2.0 / 3 ? PrimitiveShape::Box : PrimitiveShape::Capsule);
        switch (p.shape) {
            case PrimitiveShape::Sphere:
                p.size = Vec3(0.15 + 0.25 * rng.uniform(), 0.15 + 0.25 * rng.uniform(),
                              0.15 + 0.25 * rng.uniform());
                break;
            case PrimitiveShape::Box:
                p.size = Vec3(0.12 + 0.2 * rng.uniform(), 0.12 + 0.2 * rng.uniform(),
                              0.12 + 0.2 * rng.uniform());
                break;
            case PrimitiveShape::Capsule: {
                double r = 0.08 + 0.12 * rng.uniform();
                p.size = Vec3(r, r, 0.15 + 0.2 * rng.uniform());
                break;
            }
        }
        // Center inside the ball that keeps the primitive within radius 0.98.
        double max_center = std::max(0.0, 0.98 - primitive_extent(p));
        Vec3 dir(rng.normal(), rng.normal(), rng.normal());
        if (dir.norm() < 1e-9) dir = Vec3(1, 0, 0);
        dir.normalize();
        p.center = dir * (max_center * std::cbrt(rng.uniform()));
        p.albedo = Vec3(0.1 + 0.9 * rng.uniform(), 0.1 + 0.9 * rng.uniform(),
                        0.1 + 0.9 * rng.uniform());
        Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        p.rotation = normalize_quat(q);
        spec.primitives.push_back(p);
    }
    // Guarantee two distinct albedos.
    bool distinct = false;
    for (size_t i = 1; i < spec.primitives.size(); ++i)
        if ((spec.primitives[i].albedo - spec.primitives[0].albedo).cwiseAbs().maxCoeff() > 0.05)
            distinct = true;
    if (!distinct && spec.primitives.size() >= 2)
        spec.primitives[1].albedo = Vec3(1.0, 1.0, 1.0) - spec.primitives[0].albedo * 0.8;
    spec.validate();
    return spec;
}

namespace {

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal = Vec3::Zero();  // world space, unit
    const Primitive* prim = nullptr;
};

// Intersections run in the primitive's local frame.
bool intersect_ellipsoid(const Vec3& o, const Vec3& d, const Vec3& s, double& t, Vec3& n_local) {
    Vec3 os = o.cwiseQuotient(s), ds = d.cwiseQuotient(s);
    double a = ds.squaredNorm(), b = 2.0 * os.dot(ds), c = os.squaredNorm() - 1.0;
    double disc = b * b - 4 * a * c;
    if (disc < 0) return false;
    double sq = std::sqrt(disc);
    double t0 = (-b - sq) / (2 * a);
    double t1 = (-b + sq) / (2 * a);
    t = t0 > kRayEps ? t0 : (t1 > kRayEps ? t1 : -1.0);
    if (t < 0) return false;
    Vec3 p = o + t * d;
    n_local = p.cwiseQuotient(s.cwiseProduct(s)).normalized();
    return true;
}

bool intersect_box(const Vec3& o, const Vec3& d, const Vec3& h, double& t, Vec3& n_local) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis = -1;
    double sign = 1.0;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(d[i]) < 1e-12) {
            if (std::abs(o[i]) > h[i]) return false;
            continue;
        }
        double inv = 1.0 / d[i];
        double t1 = (-h[i] - o[i]) * inv;
        double t2 = (h[i] - o[i]) * inv;
        double lo = std::min(t1, t2), hi = std::max(t1, t2);
        if (lo > tmin) {
            tmin = lo;
            axis = i;
            sign = d[i] > 0 ? -1.0 : 1.0;
        }
        tmax = std::min(tmax, hi);
        if (tmin > tmax) return false;
    }
    if (tmax < kRayEps || axis < 0) return false;
    if (tmin < kRayEps) return false;  // camera inside; skip
    t = tmin;
    n_local = Vec3::Zero();
    n_local[axis] = sign;
    return true;
}

bool intersect_capsule(const Vec3& o, const Vec3& d, double r, double half_len, double& t,
                       Vec3& n_local) {
    double best = std::numeric_limits<double>::infinity();
    Vec3 best_n;
    // Lateral cylinder x^2 + y^2 = r^2, |z| <= half_len.
    double a = d.x() * d.x() + d.y() * d.y();
    if (a > 1e-12) {
        double b = 2 * (o.x() * d.x() + o.y() * d.y());
        double c = o.x() * o.x() + o.y() * o.y() - r * r;
        double disc = b * b - 4 * a * c;
        if (disc >= 0) {
            double sq = std::sqrt(disc);
            for (double tc : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
                if (tc > kRayEps && tc < best) {
                    double z = o.z() + tc * d.z();
                    if (std::abs(z) <= half_len) {
                        Vec3 p = o + tc * d;
                        best = tc;
                        best_n = Vec3(p.x(), p.y(), 0).normalized();
                    }
                }
            }
        }
    }
    // End caps.
    for (double zc : {-half_len, half_len}) {
        Vec3 cc(0, 0, zc);
        Vec3 oc = o - cc;
        double b = 2 * oc.dot(d);
        double c = oc.squaredNorm() - r * r;
        double disc = b * b - 4 * c;  // a = 1 for unit d
        if (disc < 0) continue;
        double sq = std::sqrt(disc);
        for (double tc : {(-b - sq) / 2, (-b + sq) / 2}) {
            if (tc > kRayEps && tc < best) {
                Vec3 p = o + tc * d;
                if ((p.z() - zc) * zc >= 0 || std::abs(p.z()) > half_len) {
                    best = tc;
                    best_n = (p - cc).normalized();
                }
            }
        }
    }
    if (!std::isfinite(best)) return false;
    t = best;
    n_local = best_n;
    return true;
}

bool trace_primitive(const Primitive& prim, const Vec3& o, const Vec3& d, double& t, Vec3& n_world) {
    Mat3 rot = quat_to_mat(prim.rotation);
    Vec3 ol = rot.transpose() * (o - prim.center);
    Vec3 dl = rot.transpose() * d;
    Vec3 nl;
    bool hit = false;
    switch (prim.shape) {
        case PrimitiveShape::Sphere: hit = intersect_ellipsoid(ol, dl, prim.size, t, nl); break;
        case PrimitiveShape::Box: hit = intersect_box(ol, dl, prim.size, t, nl); break;
        case PrimitiveShape::Capsule:
            hit = intersect_capsule(ol, dl, prim.size.x(), prim.size.z(), t, nl);
            break;
    }
    if (hit) n_world = rot * nl;
    return hit;
}

Hit trace(const SceneSpec& spec, const Vec3& o, const Vec3& d) {
    Hit h;
    for (const auto& prim : spec.primitives) {
        double t;
        Vec3 n;
        if (trace_primitive(prim, o, d, t, n) && t < h.t) {
            h.t = t;
            h.normal = n;
            h.prim = &prim;
        }
    }
    return h;
}

} // namespace

Tensor ray_trace(const SceneSpec& spec, const CameraPose& pose) {
    pose.validate();
    Tensor img({3, pose.height, pose.width});
    for (int py = 0; py < pose.height; ++py) {
        for (int px = 0; px < pose.width; ++px) {
            Vec3 o, d;
            pose.pixel_ray(px, py, o, d);
            Hit h = trace(spec, o, d);
            size_t idx = static_cast<size_t>(py) * pose.width + px;
            if (h.prim == nullptr) {
                img[0 * pose.height * pose.width + idx] = kBackgroundSigned;
                img[1 * static_cast<size_t>(pose.height) * pose.width + idx] = kBackgroundSigned;
                img[2 * static_cast<size_t>(pose.height) * pose.width + idx] = kBackgroundSigned;
                continue;
            }
            double lambert = std::max(0.0, h.normal.dot(kLightDir));
            double shade = 0.25 + 0.75 * lambert;
            for (int c = 0; c < 3; ++c) {
                double unit = std::clamp(h.prim->albedo[c] * shade, 0.0, 1.0);
                img[static_cast<size_t>(c) * pose.height * pose.width + idx] = 2.0 * unit - 1.0;
            }
        }
    }
    return img;
}

Tensor hit_mask(const SceneSpec& spec, const CameraPose& pose) {
    Tensor mask({pose.height, pose.width});
    for (int py = 0; py < pose.height; ++py)
        for (int px = 0; px < pose.width; ++px) {
            Vec3 o, d;
            pose.pixel_ray(px, py, o, d);
            mask[static_cast<size_t>(py) * pose.width + px] = trace(spec, o, d).prim ? 1.0 : 0.0;
        }
    return mask;
}

void MultiViewImageSet::validate() const {
    if (images.ndim() != 4 || images.dim(1) != 3) throw ShapeError("image set must be [V,3,H,W]");
    if (images.dim(0) != rig.size()) throw ShapeError("image set view count != rig size");
    if (images.dim(2) != rig.poses[0].height || images.dim(3) != rig.poses[0].width)
        throw ShapeError("image set resolution != rig resolution");
    for (size_t i = 0; i < static_cast<size_t>(images.size()); ++i)
        if (images[i] < -1.0 - 1e-9 || images[i] > 1.0 + 1e-9)
            throw NumericError("image values outside [-1,1]");
    if (condition_index && (*condition_index < 0 || *condition_index >= rig.size()))
        throw ConfigError("condition_index out of range");
}

CameraRig make_rig(const std::string& kind, const RigParams& params) {
    CameraRig rig;
    rig.name = kind;
    if (kind == "sixview") {
        const double az[6] = {30, 90, 150, 210, 270, 330};
        const double el[6] = {20, -10, 20, -10, 20, -10};
        for (int i = 0; i < 6; ++i) {
            double a = az[i] * kPi / 180.0, e = el[i] * kPi / 180.0;
            Vec3 pos = params.radius * Vec3(std::cos(e) * std::cos(a), std::sin(e),
                                            std::cos(e) * std::sin(a));
            rig.poses.push_back(look_at(pos, Vec3::Zero(), params.fov_y, params.height, params.width));
        }
    } else if (kind == "ring") {
        if (params.count < 2) throw ConfigError("ring rig requires count >= 2");
        for (int i = 0; i < params.count; ++i) {
            double a = 2.0 * kPi * i / params.count;
            Vec3 pos = params.radius * Vec3(std::cos(a), 0.0, std::sin(a));
            rig.poses.push_back(look_at(pos, Vec3::Zero(), params.fov_y, params.height, params.width));
        }
    } else {
        throw ConfigError("unknown rig kind: " + kind);
    }
    rig.validate();
    return rig;
}

CameraPose sample_random_pose(uint64_t seed, double radius_min, double radius_max, double elev_min,
                              double elev_max, double fov_y, int height, int width) {
    if (radius_max < radius_min || elev_max < elev_min)
        throw ConfigError("sample_random_pose: empty range");
    RngStream rng(derive_seed(seed, 0x90a5eULL));
    double az = 2.0 * kPi * rng.uniform();
    double el = elev_min + (elev_max - elev_min) * rng.uniform();
    double r = radius_min + (radius_max - radius_min) * rng.uniform();
    Vec3 pos = r * Vec3(std::cos(el) * std::cos(az), std::sin(el), std::cos(el) * std::sin(az));
    return look_at(pos, Vec3::Zero(), fov_y, height, width);
}

nlohmann::json DatasetManifest::to_json() const {
    nlohmann::json scenes = nlohmann::json::array();
    for (size_t i = 0; i < scene_ids.size(); ++i)
        scenes.push_back({{"id", scene_ids[i]}, {"seed", scene_seeds[i]}});
    return {{"schema_version", schema_version}, {"n_scenes", n_scenes},     {"seed", seed},
            {"rig", rig.to_json()},             {"condition_pose", condition_pose.to_json()},
            {"scenes", scenes}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, std::filesystem::path root) {
    DatasetManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1) throw StorageError("unsupported dataset schema version");
    m.n_scenes = j.at("n_scenes").get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.rig = CameraRig::from_json(j.at("rig"));
    m.condition_pose = CameraPose::from_json(j.at("condition_pose"));
    for (const auto& s : j.at("scenes")) {
        m.scene_ids.push_back(s.at("id").get<std::string>());
        m.scene_seeds.push_back(s.at("seed").get<uint64_t>());
    }
    if (static_cast<int>(m.scene_ids.size()) != m.n_scenes)
        throw StorageError("dataset manifest scene count mismatch");
    m.root = std::move(root);
    return m;
}

namespace {

std::string scene_id_for(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%04d", index);
    return buf;
}

} // namespace

DatasetManifest build_dataset(int n_scenes, const CameraRig& rig, uint64_t seed,
                              const std::filesystem::path& out_path) {
    if (n_scenes < 1) throw ConfigError("build_dataset: n_scenes must be >= 1");
    rig.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_path / "scenes");

    DatasetManifest m;
    m.n_scenes = n_scenes;
    m.seed = seed;
    m.rig = rig;
    m.root = out_path;
    double radius = rig.poses[0].position.norm();
    m.condition_pose = look_at(Vec3(radius, 0, 0), Vec3::Zero(), rig.poses[0].fov_y,
                               rig.poses[0].height, rig.poses[0].width);

    for (int i = 0; i < n_scenes; ++i) {
        uint64_t scene_seed = derive_seed(seed, static_cast<uint64_t>(i));
        std::string id = scene_id_for(i);
        SceneSpec spec = sample_scene(scene_seed);
        fs::path dir = out_path / "scenes" / id;
        fs::create_directories(dir);
        write_png(dir / "cond.png", ray_trace(spec, m.condition_pose));
        for (int k = 0; k < rig.size(); ++k) {
            const CameraPose& pose = rig.poses[static_cast<size_t>(k)];
            write_png(dir / ("view_" + std::to_string(k) + ".png"), ray_trace(spec, pose));
            std::ofstream pf(dir / ("pose_" + std::to_string(k) + ".json"));
            pf << pose.to_json().dump(2) << "\n";
            if (!pf) throw StorageError("failed writing pose json in " + dir.string());
        }
        m.scene_ids.push_back(id);
        m.scene_seeds.push_back(scene_seed);
    }
    std::ofstream mf(out_path / "manifest.json");
    mf << m.to_json().dump(2) << "\n";
    if (!mf) throw StorageError("failed writing dataset manifest");
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& dataset_path) {
    std::ifstream f(dataset_path / "manifest.json");
    if (!f) throw StorageError("missing dataset manifest: " + (dataset_path / "manifest.json").string());
    nlohmann::json j;
    f >> j;
    return DatasetManifest::from_json(j, dataset_path);
}

SceneData load_scene_data(const DatasetManifest& m, int index) {
    if (index < 0 || index >= m.n_scenes) throw ConfigError("scene index out of range");
    namespace fs = std::filesystem;
    fs::path dir = m.root / "scenes" / m.scene_ids[static_cast<size_t>(index)];
    SceneData d;
    d.condition = read_png(dir / "cond.png");
    int v = m.rig.size();
    const CameraPose& p0 = m.rig.poses[0];
    d.views.images = Tensor({v, 3, p0.height, p0.width});
    d.views.rig = m.rig;
    for (int k = 0; k < v; ++k) {
        Tensor img = read_png(dir / ("view_" + std::to_string(k) + ".png"));
        if (img.dim(1) != p0.height || img.dim(2) != p0.width)
            throw StorageError("stored view resolution mismatch");
        std::copy_n(img.data(), img.size(), d.views.images.data() + static_cast<size_t>(k) * img.size());
    }
    d.views.validate();
    return d;
}

} // namespace gecolab::scene
