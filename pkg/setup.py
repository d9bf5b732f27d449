import numpy
from setuptools import setup

# The compiled triad kernel is optional: the package falls back to the
# NumPy implementation in rotwind._kernels when the extension is absent.
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "rotwind._kernels._triad_cy",
                ["src/rotwind/_kernels/_triad_cy.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
