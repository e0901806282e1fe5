"""Optional Cython build for the rasterization kernel.

The package works without the extension: reshapekit._kernels falls back to
the NumPy implementation when the compiled module is absent or the build
toolchain is unavailable.
"""

import os

from setuptools import setup

PYX = "src/reshapekit/_kernels/_raster_cy.pyx"

ext_modules = []
if os.path.exists(PYX):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "reshapekit._kernels._raster_cy",
                    [PYX],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # keep FMA contraction off so the compiled kernel stays
                    # bit-identical to the NumPy fallback
                    extra_compile_args=["-ffp-contract=off"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
