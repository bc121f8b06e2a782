from setuptools import setup, find_packages
import io
import os

VERSION = '0.1.0'
NAME = 'avcap'
AUTHOR = 'AVCap developers'
DESCRIPTION = 'Desk-scale audio-visual captioning: spectrogram and frame patches, a joint transformer ' \
              'encoder, a causal caption decoder, beam search and caption metrics'
LICENSE = 'GPL-2.0-only'

here = os.path.abspath(os.path.dirname(__file__))
with io.open(os.path.join(here, 'README.md'), encoding='utf-8') as f:
    LONG_DESCRIPTION = f.read()

setup(
    name=NAME,
    version=VERSION,
    author=AUTHOR,
    description=DESCRIPTION,
    long_description=LONG_DESCRIPTION,
    long_description_content_type='text/markdown',
    license=LICENSE,
    package_dir={"": "lib"},
    packages=find_packages(where="lib"),
    install_requires=[
        "numpy>=1.24",
        "scipy>=1.10",
        "librosa>=0.10",
        "Pillow>=9.0",
        "nltk>=3.8.2"
    ],
    entry_points={
        "console_scripts": ["avcap=avcap.commands:main"]
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: GNU General Public License v2 (GPLv2)",
        "Operating System :: OS Independent"
    ],
    python_requires=">=3.9"
)
