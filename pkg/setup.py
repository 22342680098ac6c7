"""Build script for the compiled density core.

The extension is optional at runtime (a pure NumPy implementation is
selected automatically when the compiled module is missing), but the
default build always compiles it.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "kdesearch._backend._core",
        ["src/kdesearch/_backend/_core.pyx"],
        include_dirs=[np.get_include()],
        # No -ffast-math: the pure and compiled backends must agree to
        # near machine precision, so IEEE semantics are kept.  -march=native
        # only widens vectors and enables FMA contraction, which stays well
        # inside the backend-equivalence tolerance.
        extra_compile_args=["-O3", "-march=native"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
