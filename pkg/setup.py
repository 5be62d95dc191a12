"""Build the optional compiled kernels; the package runs without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LLTLAB_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        extensions = [
            Extension(
                "lltlab._ckernels",
                ["src/lltlab/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                # no -ffast-math: kernels must match the numpy fallback bit for bit
                extra_compile_args=["-O3", "-fno-fast-math", "-ffp-contract=off"],
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
