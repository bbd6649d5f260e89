"""Build script: compiles the optional Cython kernels when a toolchain exists.

The package is fully functional without the extension (a pure-numpy fallback
is selected at import time); `optional=True` keeps installs working on
machines with no C compiler.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "isocycle._kernels",
                ["src/isocycle/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
