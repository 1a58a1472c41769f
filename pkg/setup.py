import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("POLWATER_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "polwater.kernels._sgm",
                    ["src/polwater/kernels/_sgm.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
