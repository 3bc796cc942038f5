from os import path

from setuptools import find_packages, setup

with open(path.join(path.dirname(__file__), "README.md")) as readme:
    LONG_DESCRIPTION = readme.read()

setup(
    name="cpsample_lab",
    use_scm_version=True,
    setup_requires=["setuptools_scm"],
    description="Desk-scale diffusion lab for classifier-protected sampling and privacy audits",
    long_description=LONG_DESCRIPTION,
    long_description_content_type="text/markdown",
    keywords="diffusion ddim guidance memorization privacy membership-inference",
    license="GPL-3.0",
    packages=find_packages(),
    include_package_data=True,
    package_data={"cpsample_lab.util": ["template.cfg"]},
    extras_require={
        "dev": [
            "ruff",
            "isort",
            "pytest",
            "hypothesis",
        ]
    },
    install_requires=[
        "Click >= 7.0",
        "click_aliases >= 1.0.1",
        "importlib-metadata >= 6.8.0",
        "numpy >= 1.24",
        "packaging >= 20.3",
        "petl >= 1.7.4",
        "scipy >= 1.10",
        "tabulate >= 0.8.9",
        "tqdm >= 4.64.0",
    ],
    entry_points={
        "console_scripts": [
            "cpsample = cpsample_lab.util.cpsample_cli:cli",
        ]
    },
    zip_safe=False,
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: GNU General Public License v3 (GPLv3)",
        "Natural Language :: English",
        "Programming Language :: Python :: 3 :: Only",
        "Programming Language :: Python :: 3.8",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
)
