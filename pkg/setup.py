"""
Setup script for pa-bcnn
"""

from setuptools import setup, find_packages
from pathlib import Path

# Ler README
this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text(encoding='utf-8')

# Ler requirements (só a seção de runtime; ferramentas de teste vão em extras)
requirements = []
with open('requirements.txt', 'r', encoding='utf-8') as f:
    for line in f:
        line = line.strip()
        if line.startswith('# Development'):
            break
        if line and not line.startswith('#'):
            requirements.append(line)

setup(
    name='pa-bcnn',
    version='1.0.0',
    author='PA-BCNN Team',
    description='Reconstrução fotoacústica com U-Net bayesiana e quantificação de incerteza',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages(where='src'),
    package_dir={'': 'src'},
    classifiers=[
        'Development Status :: 4 - Beta',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Medical Science Apps.',
        'Topic :: Scientific/Engineering :: Image Processing',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Operating System :: OS Independent',
    ],
    python_requires='>=3.10',
    install_requires=requirements,
    extras_require={
        'dev': [
            'pytest>=8.0.0',
            'pytest-cov>=5.0.0',
            'black>=24.0.0',
        ],
    },
    entry_points={
        'console_scripts': [
            'pabcnn=pabcnn.cli:main',
            'pabcnn-desk-study=pabcnn.run_desk_study:main',
        ],
    },
    zip_safe=False,
)
