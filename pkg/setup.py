"""Build script for the optional compiled rasterization sweeps.

The package is pure Python plus one optional Cython extension holding the
per-pixel hot loops (z-buffer rasterization and soft-silhouette distance
sweeps).  If the extension cannot be built the package falls back to the
numpy reference kernels at import time, so the build is marked optional.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    ext = Extension(
        "sftkit.kernels._sweeps",
        sources=["src/sftkit/kernels/_sweeps.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off keeps the compiled arithmetic bit-compatible with
        # the numpy reference backend (no FMA contraction).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    ext.optional = True
    extensions = cythonize(
        [ext], compiler_directives={"language_level": 3}, quiet=True
    )

setup(ext_modules=extensions)
