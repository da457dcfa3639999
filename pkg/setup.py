"""Build glue for the optional compiled recognizer kernel.

The package is pure Python except for ``litrag.grammar._kernel_cy``, a
Cython twin of ``litrag.grammar._kernel_py``. If Cython or a C compiler
is missing the extension is skipped and the package falls back to the
pure-Python kernel at import time.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled kernel skipped ({exc!r}); "
            "litrag will use the pure-Python kernel",
            file=sys.stderr,
        )


def extensions():
    source = "src/litrag/grammar/_kernel_cy.pyx"
    if not os.path.exists(source):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print(
            "warning: Cython not found; litrag will use the pure-Python kernel",
            file=sys.stderr,
        )
        return []
    ext = Extension(
        "litrag.grammar._kernel_cy",
        sources=[source],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
