"""Build hook for the optional compiled RIP kernel.

Without Cython (or a C compiler) the package installs pure Python and
falls back to the NumPy implementation at import time.
"""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CIRCSENSE_NO_EXTENSION") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "circsense._rip_kernel",
                    ["src/circsense/_rip_kernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
