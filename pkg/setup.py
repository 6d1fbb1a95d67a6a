import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SPNET_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "spnet._kernels",
                    ["src/spnet/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # No Cython: install the pure-numpy backend only.
        ext_modules = []

setup(ext_modules=ext_modules)
