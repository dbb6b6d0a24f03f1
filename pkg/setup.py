import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled matching kernel is optional: if the build fails the package
# falls back to the pure-numpy implementation selected in dyncorr.kernels.
ext = Extension(
    "dyncorr._core",
    ["src/dyncorr/_core.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    optional=True,
)

setup(ext_modules=cythonize(ext, language_level=3))
