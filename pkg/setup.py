from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy as np

ext = Extension(
    "voltseg._native",
    sources=["src/voltseg/_native.pyx"],
    depends=["src/voltseg/_native_impl.h"],
    include_dirs=[np.get_include(), "src/voltseg"],
    extra_compile_args=["-O3", "-march=native", "-ffast-math", "-funroll-loops"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
