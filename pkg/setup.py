"""Build script for the optional compiled metric kernels.

The package works without the extension: mlbcap.kernels falls back to the
pure-Python implementations when mlbcap._ckernels is missing, so the
extension is marked optional and a failed compile does not abort the install.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "mlbcap._ckernels",
                ["src/mlbcap/_ckernels.pyx"],
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
