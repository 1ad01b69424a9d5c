"""Builds the optional compiled kernel module.

The package works without it: ``visinstruct.diffusion.kernels`` falls back to
the numpy implementation when the extension is missing.
"""
import os

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


def _extensions():
    if os.environ.get("VISINSTRUCT_NO_EXT"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "visinstruct.diffusion._kernels",
        ["src/visinstruct/diffusion/_kernels.pyx"],
        include_dirs=[np.get_include()],
        # fast-math lets gcc call libmvec's SIMD exp/tanh; fp-contract=off keeps
        # axpby free of FMA so it matches numpy bit for bit. Compile-only flags:
        # the linker never sees -ffast-math, so no process-wide FTZ.
        extra_compile_args=["-O3", "-march=native", "-ffast-math", "-ffp-contract=off"],
        libraries=["mvec", "m"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
