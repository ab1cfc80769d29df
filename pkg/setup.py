"""Build script: compiles the optional fast kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile only costs speed.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ddm._kernels._fast",
                ["src/ddm/_kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -ffp-contract=off keeps arithmetic bit-identical to the
                # NumPy fallback (no fused multiply-add contraction)
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
