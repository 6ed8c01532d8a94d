"""Build the optional compiled kernels; the package falls back to numpy when absent."""
import os

import numpy
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SIGMAHOM_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "sigmahom._kernels_ext",
                    ["src/sigmahom/_kernels_ext.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
