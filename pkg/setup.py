import platform

from setuptools import Extension, setup
from Cython.Build import cythonize

extra_compile_args = ["-O3"]
if platform.machine() in ("x86_64", "AMD64"):
    # __builtin_popcountll lowers to the POPCNT instruction instead of a
    # libgcc table fallback
    extra_compile_args.append("-mpopcnt")

setup(
    ext_modules=cythonize(
        [
            Extension(
                "hashscreen._kernels",
                ["src/hashscreen/_kernels.pyx"],
                extra_compile_args=extra_compile_args,
            )
        ],
        language_level=3,
    )
)
