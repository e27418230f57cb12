from setuptools import find_packages, setup

setup(
    name="couettelab",
    version="0.1.0",
    package_dir={'': 'src'},
    packages=find_packages(where='src'),
    install_requires=[
        "numpy",
        "scipy",
        "pandas",
        "pyyaml",
        "jax[cpu]",
        "equinox",
        "dataclasses_json",
    ],
    extras_require={
        "test": ["pytest"],
    },
    entry_points={
        "console_scripts": [
            "couettelab=couettelab.cli:main",
        ],
    },
)
