import os
import sys

import numpy as np
from setuptools import setup

ext_modules = []
if os.environ.get("TYPICALITY_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        np_dir = os.path.dirname(np.__file__)
        ext = Extension(
            "typicality._kernels",
            ["src/typicality/_kernels.pyx"],
            include_dirs=[np.get_include()],
            library_dirs=[os.path.join(np_dir, "random", "lib")],
            libraries=["npyrandom"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3"],
        )
        ext_modules = cythonize([ext], language_level=3)
    except Exception as exc:  # pragma: no cover
        # the pure-Python kernels are used when the extension is missing
        print(f"warning: not building compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
