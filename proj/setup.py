"""Builds the certed extension by delegating to the project's CMake build."""

import pathlib
import shutil
import subprocess
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = pathlib.Path(__file__).resolve().parent
        build_dir = pathlib.Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)

        subprocess.check_call(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                f"-DPython3_EXECUTABLE={sys.executable}",
                "-DCERTED_BUILD_TESTS=OFF",
            ]
        )
        subprocess.check_call(
            ["cmake", "--build", str(build_dir), "--target", "certed_py", "-j"]
        )

        built = next(build_dir.glob("certed*.so"))
        dest = pathlib.Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[CMakeExtension("certed")],
    cmdclass={"build_ext": CMakeBuild},
)
