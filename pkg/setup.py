"""Builds the compiled simulation kernels.

    python setup.py build_ext --inplace

The extension links against numpy's npyrandom library so the C kernels
draw from the same PCG64 streams as the pure-python fallback. The build
is optional: if no compiler is available the package installs anyway and
falls back to cdmsim._kernels_py at import time.
"""

import os

import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

npyrandom_dir = os.path.join(os.path.dirname(np.__file__), "random", "lib")

extensions = [
    Extension(
        "cdmsim._kernels",
        ["src/cdmsim/_kernels.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[npyrandom_dir],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off keeps the C arithmetic bit-identical to the
        # pure-python kernels (no FMA contraction).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
