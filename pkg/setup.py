from setuptools import find_packages, setup

setup(
    name='tcpsim',
    license='Apache-2.0 License',
    version='0.1',
    packages=find_packages(exclude=['tests']),
    install_requires=[
        'click',
        'cytoolz',
        'more-itertools',
        'numpy',
        'pandas',
        'tqdm',
        'matplotlib',
    ],
    scripts=['tcpsim/bin/tcpsim']
)
