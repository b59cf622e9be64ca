"""Build script for the optional compiled kernels.

The package works without them; ``marginalpriv._kernels`` falls back to numpy
implementations when the extension is missing.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("MARGINALPRIV_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "marginalpriv._kernels._ckernels",
                    ["src/marginalpriv/_kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )

setup(ext_modules=ext_modules)
