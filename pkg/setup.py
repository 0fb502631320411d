"""Build the optional compiled oracle kernels; the package works without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("DELAYED_IMPACT_NO_EXT", "") in ("", "0"):
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("delayed_impact._kernels", ["src/delayed_impact/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
