"""Build script for the compiled interior-point kernels.

The package works without the extension (a NumPy fallback is selected at
import time), so a missing Cython toolchain only costs speed.
"""

from setuptools import setup
from setuptools.extension import Extension

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "boxmpc._ipm_kernels",
                ["src/boxmpc/_ipm_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
