import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "expertq.kernels._compiled",
        ["src/expertq/kernels/_compiled.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    # The package falls back to the pure-numpy kernels if the build fails.
    ext.optional = True
    ext_modules = cythonize(ext, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
