"""Build script: compiles the optional fast kernel when Cython is available.

The package works without the extension (a pure-Python kernel is selected at
import time), so any build failure here is non-fatal by design: install with
GRIDSHIELD_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup


def extensions():
    if os.environ.get("GRIDSHIELD_NO_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    # -ffp-contract=off: no fused multiply-adds, so the compiled kernel stays
    # bit-identical with the pure-Python fallback.
    ext = Extension(
        "gridshield._kernel",
        ["src/gridshield/_kernel.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions())
