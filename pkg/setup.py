from setuptools import setup, find_packages

setup(
    name='SRRN',
    version='1.0.0',
    packages=find_packages(exclude=('tests', 'tests.*')),
    license='MIT',
    description='Lightweight residual CNN for single image super-resolution, trained with numpy',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Topic :: Scientific/Engineering :: Image Processing',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    include_package_data=True,
    install_requires=[
        'numpy>=1.21',
        'scipy>=1.7',
        'scikit-image>=0.19',
        'Pillow>=9.0',
        'django>=3.2',
    ],
    extras_require={
        'test': ['pytest>=7', 'hypothesis>=6'],
    },
    entry_points={
        'console_scripts': ['srrn = SRRN.cli:main'],
    },
    python_requires=">=3.9",
)
