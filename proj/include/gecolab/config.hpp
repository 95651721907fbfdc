// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gecolab/models.hpp"
#include "gecolab/scene.hpp"
#include "gecolab/splat.hpp"
#include "gecolab/stage2.hpp"
#include "gecolab/vsd.hpp"

namespace gecolab::config {

// Where a resolved value came from. Precedence: Default < File < Override.
enum class Source { Default, File, Override };
const char* to_string(Source s);

struct Paths {
    std::string dataset;
    std::string checkpoints;
    std::string pgt;
    std::string reports;
};

struct DatasetSection {
    int scenes = 100;
    int resolution = 64;
    std::string rig = "sixview";
    int ring_count = 15;  // "ring" rigs only
    double radius = 2.4;
    double fov_y = 0.8726646259971648;
};

struct ModelSection {
    int width = 64;
    int views = 6;
    int resolution = 64;
    int cond_channels = 8;
    int time_dim = 32;
    int groups = 8;
};

struct ScheduleSection {
    std::string kind = "cosine";
    double t_min = 1e-3;
    double t_max = 0.999;
};

struct EvalSection {
    std::string protocol = "ring15";
    int scenes = 8;
    int diversity_seeds = 4;
};

// Every tunable of the pipeline, one home. Scalar leaves are addressed as
// "section.key" by the config file and --set overrides; RunConfig::to_json
// echoes all of them.
struct RunConfig {
    int schema_version = 1;
    uint64_t seed = 0;
    bool strict_determinism = false;

    Paths paths;  // defaults derive from $GECO_LAB_HOME at resolve time
    DatasetSection dataset;
    ModelSection model;
    ScheduleSection schedule;
    models::TeacherTrainConfig teacher;
    models::ReconTrainConfig recon;
    vsd::VSDConfig vsd;
    stage2::Stage2Config stage2;
    splat::RasterConfig render;  // shared by recon pretraining, stage II, eval
    EvalSection eval;

    void validate() const;
    nlohmann::json to_json() const;
    std::string digest() const;

    // Derived objects consumed by the pipeline modules.
    models::NetConfig teacher_net() const;
    models::NetConfig recon_net() const;
    diffusion::DiffusionSchedule make_schedule() const;
    scene::CameraRig make_generation_rig() const;
};

struct ResolvedConfig {
    RunConfig config;
    std::map<std::string, Source> provenance;  // one entry per schema key

    // {"key": {"value": ..., "source": "default|file|override"}, ...}
    nlohmann::json echo() const;
};

// All addressable keys, in schema order.
const std::vector<std::string>& schema_keys();

// Layered resolution: documented defaults, then the file (if any), then
// "key=value" overrides. Unknown keys and type mismatches throw ConfigError.
ResolvedConfig resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides);

// Same, from config text already in memory (file semantics).
ResolvedConfig resolve_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides);

// Emits the config-file dialect (see docs/config_format.md); parsing the
// result reproduces the same values.
std::string emit_config(const RunConfig& c);

} // namespace gecolab::config
