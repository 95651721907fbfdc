# Copyright (c) 2026 gecolab authors
# SPDX-License-Identifier: Apache-2.0
"""Python surface over the gecolab C++ core.

Everything heavy lives in the compiled ``_core`` module; this package just
re-exports it. Images are numpy float64 arrays shaped [3, H, W] in [-1, 1],
gaussian sets are packed [N, 14] arrays (pos xyz, scale xyz, quat wxyz,
opacity, rgb).
"""

from gecolab._core import (
    CameraPose,
    ConfigError,
    NumericError,
    ShapeError,
    StorageError,
    __version__,
    add_noise,
    ddim_timesteps,
    emit_config,
    export_gaussians,
    import_gaussians,
    look_at,
    perceptual,
    psnr,
    rasterize,
    resolve_config,
    run_cli,
    schedule_coeffs,
    sha256_file,
    sha256_hex,
    sha256_tree,
    ssim,
)

__all__ = [
    "CameraPose",
    "ConfigError",
    "NumericError",
    "ShapeError",
    "StorageError",
    "__version__",
    "add_noise",
    "ddim_timesteps",
    "emit_config",
    "export_gaussians",
    "import_gaussians",
    "look_at",
    "perceptual",
    "psnr",
    "rasterize",
    "resolve_config",
    "run_cli",
    "schedule_coeffs",
    "sha256_file",
    "sha256_hex",
    "sha256_tree",
    "ssim",
]
