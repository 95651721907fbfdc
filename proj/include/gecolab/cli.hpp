// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gecolab::cli {

// Sidecar description of a checkpoint-producing run, written as
// manifest.json in the run directory. created_at lives here rather than in
// the checkpoint payload so checkpoint files stay byte-reproducible.
struct CheckpointManifest {
    std::string stage;  // teacher | reconstructor | stage1 | stage2
    std::string config_digest;
    std::vector<std::string> parent_digests;
    std::string created_at;  // ISO 8601 UTC
    nlohmann::json metrics_snapshot = nlohmann::json::object();

    void validate() const;
    nlohmann::json to_json() const;
    static CheckpointManifest from_json(const nlohmann::json& j);
};

// Entry point shared by the geco binary and the tests. Exit codes: 0 on
// success, 2 on configuration or usage errors, 3 on runtime failures.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args excluding argv[0]

} // namespace gecolab::cli
