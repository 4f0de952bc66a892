"""Build script for the compiled kernel; metadata lives in pyproject.toml."""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: install the pure-Python backend only
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("gogsim._kernels", ["src/gogsim/_kernels.pyx"],
                   include_dirs=[np.get_include()],
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": 3})

setup(ext_modules=ext_modules)
