"""CMake-driven build of the `_shapeprior` pybind11 extension.

The CMake project is the single source of truth for compilation; setup.py
just drives it and copies the resulting module into the wheel/package.
"""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.extension import Extension


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp) / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        out_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        out_path.parent.mkdir(parents=True, exist_ok=True)

        subprocess.run(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DSHAPEPRIOR_BUILD_TESTS=OFF",
                f"-DPYTHON_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_shapeprior"],
            check=True,
        )

        built = sorted(build_dir.glob("_shapeprior*.so"))
        if not built:
            raise RuntimeError("CMake did not produce the _shapeprior module")
        shutil.copy2(built[0], out_path)


setup(
    ext_modules=[CMakeExtension("shapeprior._shapeprior")],
    cmdclass={"build_ext": CMakeBuild},
)
