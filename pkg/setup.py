"""Build the optional Cython kernel extension.

If Cython or a C compiler is missing the package still installs; the
numpy kernels in ``pvnet.neuralcore._pykernels`` are used instead.
"""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "pvnet.neuralcore._ckernels",
                ["src/pvnet/neuralcore/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
