"""Build script: compiles the optional Cython kernel extension.

The extension is a pure accelerator; if Cython or a C compiler is missing
the install proceeds and the package falls back to the numpy kernels.
"""
import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError


class optional_build_ext(build_ext):
    def run(self):
        try:
            build_ext.run(self)
        except (CCompilerError, ExecError, PlatformError, FileNotFoundError) as e:
            print(f"warning: kernel extension build skipped ({e}); "
                  "using numpy fallback", file=sys.stderr)

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except (CCompilerError, ExecError, PlatformError, FileNotFoundError) as e:
            print(f"warning: {ext.name} build failed ({e}); "
                  "using numpy fallback", file=sys.stderr)


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as e:
        print(f"warning: {e}; building without compiled kernels", file=sys.stderr)
        return []
    ext = Extension(
        "naturamap.kernels._kernels",
        ["src/naturamap/kernels/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={
        "boundscheck": False, "wraparound": False, "cdivision": True,
        "language_level": 3,
    })


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
