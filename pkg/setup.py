from setuptools import setup, find_packages


# Get version inside personify/version.py without importing the package
exec(compile(open('personify/version.py').read(),
             'personify/version.py', 'exec'))

install_deps = [
    # Numerical core
    'numpy',
    'scipy',
    'scikit-learn',
    # Configuration, language model and embedding clients
    'appdirs',
    'httpx',
    'jinja2',
]

setup(
    name='personify',
    version=__version__,
    packages=find_packages(exclude=('tests*', 'dev*')),
    description='Personality classification of social network users with'
                ' hypergraphs of their social environments',
    long_description=open('README.md', 'r').read(),
    long_description_content_type='text/markdown',
    license='LGPL',

    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved :: GNU Lesser General Public License v3'
        ' (LGPLv3)',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
    ],
    keywords='personality mbti enneagram hypergraph neural network llm',
    python_requires='>=3.8',
    install_requires=install_deps,
    extras_require={
        'dev': [
            'flake8'
        ]
    },
    entry_points={
        'console_scripts': ['personify = personify.__main__:main']
    }
)
