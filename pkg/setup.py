from Cython.Build import cythonize
from setuptools import Extension, setup

ext_modules = cythonize(
    [Extension("adot.lp._kernel", ["src/adot/lp/_kernel.pyx"], extra_compile_args=["-O3"])],
    compiler_directives={"language_level": "3"},
)

setup(ext_modules=ext_modules)
