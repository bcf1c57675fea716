import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "hypstab._kernels_cy",
                ["src/hypstab/_kernels_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # no Cython: the package falls back to the numpy kernels at import
    extensions = []

for ext in extensions:
    ext.optional = True

setup(ext_modules=extensions)
