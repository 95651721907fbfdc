// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "gecolab/tensor.hpp"

namespace gecolab {

// Images move through the pipeline as [3,H,W] (or [V,3,H,W]) tensors in [-1,1].
// On disk they are 8-bit RGB PNGs.

// Rounds to 8-bit and writes a PNG. `img` must be [3,H,W].
void write_png(const std::filesystem::path& p, const Tensor& img);

// Reads a PNG into a [3,H,W] tensor in [-1,1].
Tensor read_png(const std::filesystem::path& p);

// PNG bytes without touching the filesystem (used for content digests).
std::vector<unsigned char> encode_png(const Tensor& img);

inline double to_unit(double x) { return (x + 1.0) * 0.5; }        // [-1,1] -> [0,1]
inline double from_unit(double x) { return 2.0 * x - 1.0; }        // [0,1] -> [-1,1]

// Tile a [V,3,H,W] set into one [3,H,V*W] strip (sample grids in training logs).
Tensor tile_views(const Tensor& views);

} // namespace gecolab
