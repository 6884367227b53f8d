"""Build the optional compiled trajectory kernel.

The package works without it; ``ticksim._backend`` falls back to the
pure-Python kernel when the extension is missing.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "ticksim._sampler_ext",
                ["src/ticksim/_sampler_ext.pyx"],
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
