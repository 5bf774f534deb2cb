from setuptools import setup, find_packages

setup(
    name="mixsel",
    version="0.1.0",
    packages=find_packages(include=["mixsel", "mixsel.*", "mixsel_site", "mixsel_site.*"]),
    include_package_data=True,
    install_requires=[
        "Django>=4.2",
        "djangorestframework>=3.14",
        "python-dotenv>=1.0",
        "numpy>=1.24",
        "scipy>=1.10",
        "tqdm>=4.66",
    ],
    entry_points={
        "console_scripts": [
            "mixsel=mixsel.cli:main",
        ],
    },
    author="Wayne",
    author_email="support@techwithwayne.com",
    description="Penalized-likelihood order selection for Gaussian location mixtures, with geometry and entropy experiments.",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    url="https://techwithwayne.com",
    license="MIT",
    classifiers=[
        "Framework :: Django",
        "Programming Language :: Python :: 3",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Operating System :: OS Independent",
        "License :: OSI Approved :: MIT License"
    ],
    python_requires='>=3.10',
)
