from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "credstuff._ckernels",
        ["src/credstuff/_ckernels.pyx"],
        include_dirs=["src/credstuff"],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
