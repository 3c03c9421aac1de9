import os

from setuptools import setup

ext_modules = []
if os.environ.get("WOEVAE_NO_EXT", "") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # build the pure-python package only
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "woevae._kernels",
                    ["src/woevae/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    # no contraction into FMA: results must match the numpy fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
