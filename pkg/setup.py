"""Build script: compiles the optional fast iteration kernel.

The package works without the extension (pure-numpy fallback is selected at
import time), so a missing compiler or Cython only costs speed, not features.
"""
import os

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    if not os.path.exists("src/nomaprec/_core.pyx"):
        raise ImportError
    ext_modules = cythonize(
        [
            Extension(
                "nomaprec._core",
                ["src/nomaprec/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
