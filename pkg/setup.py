import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python fallback is selected at import time
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("PSYCHNOTES_NO_EXT"):
    extensions = [
        Extension(
            "psychnotes._kernels._ckernels",
            ["src/psychnotes/_kernels/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            # keep IEEE semantics so both backends choose identical splits
            extra_compile_args=["-O3", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    ext_modules = cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
