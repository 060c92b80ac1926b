from setuptools import setup, find_packages

setup(
    name="phdnet",
    version="0.1.0",
    packages=find_packages(exclude=['tests', 'examples', 'examples.*']),
    entry_points={
        'console_scripts': [
            'phdnet=phdnet.script.phdnet:main',
        ],
    },
    install_requires=[
        'click',
        'numpy',
        'scipy',
        'shapely>=2.0',
        'pandas',
        'matplotlib',
        'pyyaml',
    ],
    extras_require={
        'testing': [
            'pytest',
        ],
    },
    package_data={
        'phdnet': ['data/*.json'],
    }
)
