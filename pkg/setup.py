import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ALARMTAXIS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        flags = ["-O3", "-fno-math-errno", "-fopenmp-simd"]
        if not os.environ.get("ALARMTAXIS_PORTABLE"):
            flags.append("-march=native")
        ext_modules = cythonize(
            [
                Extension(
                    "alarmtaxis._ckernels",
                    ["src/alarmtaxis/_ckernels.pyx", "src/alarmtaxis/_core.c"],
                    include_dirs=[np.get_include(), "src/alarmtaxis"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=flags,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
