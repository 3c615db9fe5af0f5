import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MINCOPLAN_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "mincoplan._core",
                    sources=["src/mincoplan/_core.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": 3,
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )
    except ImportError:
        # No Cython available: install the pure-python fallback only.
        ext_modules = []

setup(ext_modules=ext_modules)
