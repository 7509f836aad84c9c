"""Build script for the optional compiled simulation kernel.

The package is pure Python except for ``reps.simkernel._core``, a small
Cython extension covering the Monte Carlo tournament loop. If Cython or a
working C compiler is missing, the build skips the extension and the
package falls back to the numpy twin (``reps.simkernel._pure``) at import.
Set REPS_NO_EXTENSION=1 to force the pure build.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that demotes compiler failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler / toolchain breakage
            self._skip(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._skip(exc)

    @staticmethod
    def _skip(exc):
        print(
            f"warning: building reps.simkernel._core failed ({exc!r}); "
            "falling back to the pure-Python kernel",
            file=sys.stderr,
        )


def extensions():
    if os.environ.get("REPS_NO_EXTENSION"):
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        print(
            "warning: Cython not available; skipping reps.simkernel._core",
            file=sys.stderr,
        )
        return []
    ext = Extension(
        "reps.simkernel._core",
        ["src/reps/simkernel/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
