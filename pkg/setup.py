"""Build script for the compiled episode kernel.

The package installs and runs without the extension (a pure-Python kernel
is selected at import time), so a failed compile only costs speed.
"""

import os

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - source-only install
    ext_modules = []
else:
    npyrandom_dir = os.path.join(os.path.dirname(numpy.random.__file__), "lib")
    ext = Extension(
        "edgebandit._episode_c",
        ["src/edgebandit/_episode_c.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[npyrandom_dir],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off: no FMA contraction, so the compiled kernel is
        # bit-identical to the pure-Python fallback (same IEEE op sequence).
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
