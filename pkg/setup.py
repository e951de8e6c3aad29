# -*- coding: utf-8 -*-
from pathlib import Path
from setuptools import setup, find_packages

requirements_file_path = Path(__file__).parent / "requirements.txt"
with open(requirements_file_path) as file:
    install_requires = file.readlines()

with open("README.md", "r") as f:
    long_description = f.read()

setup(
    name="sa-reid",
    version="0.0.1",
    description="Parameter-free spatial attention for GAP classifiers, with manual backpropagation and re-identification evaluation",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    package_data={"sa_reid": ["metadata/*.yaml"]},
    include_package_data=True,
    python_requires=">=3.9",
    install_requires=install_requires,
    extras_require=dict(test=["pytest>=7.0"]),
    entry_points=dict(console_scripts=["sa-reid=sa_reid.cli:main"]),
)
