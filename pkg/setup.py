"""Build script for the optional compiled scoring kernel.

The package works without the extension (a pure-numpy backend is selected at
import time); building it just makes beam search and the metric suite faster.
"""
import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "stylecompat.kernels._fast",
        ["src/stylecompat/kernels/_fast.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
