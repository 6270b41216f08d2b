"""Build script: compiles the optional Cython pair-interaction engine.

The extension is a pure speedup; if Cython or a C compiler is missing the
package installs anyway and falls back to the NumPy engine at import time.
"""

import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compile failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as err:  # compiler missing, etc.
            warnings.warn(f"building the C engine failed ({err}); "
                          "pottsgas will use the pure-Python engine")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as err:
            warnings.warn(f"building {ext.name} failed ({err}); "
                          "pottsgas will use the pure-Python engine")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as err:
        warnings.warn(f"Cython/numpy unavailable ({err}); skipping C engine")
        return []
    ext = Extension(
        "pottsgas._core.engine_cy",
        ["src/pottsgas/_core/engine_cy.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
