#!/usr/bin/env python3
"""
Setup file for gr-jidds GNU Radio OOT module
"""

from setuptools import find_packages, setup

setup(
    name="gr-jidds",
    version="0.1.0",
    description="Joint iterative detection and LDPC decoding for two-dimensional interference channels",
    author="gr-jidds developers",
    license="GPLv3",
    package_dir={"": "python"},
    packages=find_packages("python"),
    install_requires=[
        "numpy",
        "scipy",
        "joblib",
        "tqdm",
    ],
    extras_require={
        "test": ["hypothesis"],
    },
    entry_points={
        "console_scripts": [
            "gr-jidds=gr_jidds.cli:main",
        ],
    },
    python_requires=">=3.8",
)
