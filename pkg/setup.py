"""
setup.py for the heralded magnon memory toolkit
"""

from setuptools import setup, find_packages

setup(
    name="magnon-memory",
    version="0.1",
    description="Simulation and tomography of a heralded single-magnon memory for photon polarization.",
    packages=find_packages(exclude=["tests", "examples", "examples.*"]),
    py_modules=[
        "cli",
        "entanglement",
        "main",
        "path_utils",
        "polarization",
        "records",
        "stats",
        "tomography",
        "utils",
    ],
    install_requires=[
        "click",
        "numpy",
        "tqdm",
        "omegaconf",
        "pandas",
        "pylint",
        "pyyaml",
        "scipy",
        "pyre-check",
        "pytest",
    ],
    entry_points={"console_scripts": ["magnon=cli:main"]},
    extras_require={},
)
