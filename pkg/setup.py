"""Build hook for the optional compiled kernels.

Without Cython or a C compiler the package installs pure-Python and the
kernels fall back to ``transfer_explore._pykernels`` at import time.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TRANSFER_EXPLORE_NO_EXT"):
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
                    "transfer_explore._ckernels",
                    ["src/transfer_explore/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # identical float results to the Python kernels: no FMA, no fast-math
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
