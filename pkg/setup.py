from setuptools import setup

setup(
    name='coherence-protection',
    version='0.1.0',
    description='Noise-assisted coherence protection of an atom in a leaky cavity, beyond the Markov approximation',
    python_requires='>=3.10',
    packages=['coherence_protection'],
    install_requires=[
        'numpy',
        'scipy>=1.9',
        'pandas>=1.5',
        'pyyaml',
        'tqdm',
    ],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['coherence-protection=coherence_protection.cli:main']},
)
