from setuptools import setup, find_packages

with open('requirements.txt') as f:
    INSTALL_REQUIRES = [l.strip() for l in f.readlines() if l.strip()]

setup(name='personsig',
      version='0.0.1',
      description='Graph-based person signatures for re-identification',
      packages=find_packages(),
      package_data={'personsig': ['schemas/*.json']},
      install_requires=INSTALL_REQUIRES,
      entry_points={
          'console_scripts': ['gps=personsig.cli:main'],
      },
      )
