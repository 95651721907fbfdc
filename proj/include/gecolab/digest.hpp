// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gecolab {

// SHA-256 helpers (OpenSSL EVP) used for checkpoint lineage and
// reproducibility checks.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, size_t len);
    void update(const std::string& s) { update(s.data(), s.size()); }
    std::string hex_digest();  // finalizes; object unusable afterwards

private:
    void* ctx_ = nullptr;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file(const std::filesystem::path& p);

// Digest of a directory tree: file paths (relative, sorted, '/'-separated) and
// contents hashed in order. Bit-identical trees get identical digests.
std::string sha256_tree(const std::filesystem::path& root);

} // namespace gecolab
