import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("QROBUST_PURE_PYTHON", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "qrobust._kernels",
                    ["src/qrobust/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ]
        )

setup(ext_modules=ext_modules)
