import os

from setuptools import find_packages, setup

ver_file = os.path.join("routeseg", "_version.py")
with open(ver_file) as f:
    exec(f.read())

packages = find_packages(exclude=["docs", "long_tests", "scripts"])

#
# Base installation
#
install_requires = [
    "numpy>=1.17",
    "scipy>=1.6",
    "pandas",
    "docopt",
    "pyyaml",
    "tqdm",
]

#
# Extras
#

# default installation: numba compiles the convolution loops and the shape rasterizers
default_requires = [
    "numba",
]

extras_require = {
    "default": default_requires,
    "test": default_requires + ["pytest", "pytest-cov"],
}

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(
    name="routeseg",
    version=__version__,
    description="Semi- and self-supervised semantic segmentation with a dynamic routing network, on a numpy autodiff core",
    long_description=long_description,
    long_description_content_type="text/markdown",
    license="MIT",
    packages=packages,
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Intended Audience :: Education",
        "Topic :: Scientific/Engineering :: Image Recognition",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3 :: Only",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    install_requires=install_requires,
    extras_require=extras_require,
    entry_points={"console_scripts": ["routeseg = routeseg.experiment.cli:main"]},
    zip_safe=False,
)
