"""Build script for the optional compiled ADMM kernel.

The package works without the extension (a numpy fallback is selected at
import time); the extension only removes per-iteration Python overhead.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dcatune.kernel._loop_cy",
                sources=["src/dcatune/kernel/_loop_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

for ext in ext_modules:
    ext.optional = True

setup(ext_modules=ext_modules)
