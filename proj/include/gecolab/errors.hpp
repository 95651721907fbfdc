// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gecolab {

// Bad user input: unknown keys, out-of-range parameters, malformed files.
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched array shapes between operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or singular systems encountered mid-computation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failures.
struct StorageError : std::runtime_error {
    explicit StorageError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gecolab
