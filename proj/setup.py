# Copyright (c) 2026 gecolab authors
# SPDX-License-Identifier: Apache-2.0
"""setuptools -> CMake bridge for the _core extension.

The extension is produced by the repo's CMake build (target `_core`); this
shim configures an out-of-tree build and points the module output at the
directory setuptools expects the built extension in.
"""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).resolve().parent
        # get_ext_fullpath -> .../gecolab/_core<suffix>; CMake writes the module
        # into its parent directory.
        out_dir = Path(self.get_ext_fullpath(ext.name)).resolve().parent
        out_dir.mkdir(parents=True, exist_ok=True)
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        configure = [
            "cmake",
            "-S", str(source_dir),
            "-B", str(build_dir),
            f"-DPython3_EXECUTABLE={sys.executable}",
            f"-DGECOLAB_PY_OUTPUT_DIR={out_dir}",
            "-DGECOLAB_BUILD_PYTHON=ON",
            f"-DCMAKE_BUILD_TYPE={os.environ.get('GECOLAB_CMAKE_BUILD_TYPE', 'Release')}",
        ]
        subprocess.run(configure, check=True)
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_core",
             "-j", str(os.cpu_count() or 1)],
            check=True,
        )


setup(
    ext_modules=[CMakeExtension("gecolab._core")],
    cmdclass={"build_ext": CMakeBuild},
)
