"""Build script: compiles the optional Cython kernel.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any build failure of the extension degrades to
a warning instead of aborting the install.
"""

import warnings

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler and friends
            warnings.warn(f"skipping compiled kernel ({exc}); "
                          "falling back to the pure-Python integrator")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"skipping {ext.name} ({exc})")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [Extension(
            "matscat._kernels.ode_cy",
            ["src/matscat/_kernels/ode_cy.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
        )],
        language_level=3,
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
