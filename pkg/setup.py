from setuptools import setup
import os


def _version(this_directory):
    scope = {}
    with open(os.path.join(this_directory, 'hybridse', '_version.py')) as f:
        exec(f.read(), scope)
    return scope['__version__']


def main():
    this_directory = os.path.abspath(os.path.dirname(__file__))
    with open(os.path.join(this_directory, 'README.rst'), 'r') as f:
        long_description = f.read()

    setup(name='hybridse',
          version=_version(this_directory),
          description='Hybrid contrastive and denoising sentence embeddings '
                      'for clinical notes',
          long_description=long_description,
          long_description_content_type='text/x-rst',
          packages=['hybridse', 'hybridse.trainer', 'hybridse.export',
                    'hybridse.testing', 'hybridse.tests'],
          package_data={'hybridse': ['data/*.txt'],
                        'hybridse.tests': ['data/*']},
          entry_points={'console_scripts': [
              'hybridse = hybridse.cli:main']},
          python_requires='>=3.8',
          install_requires=['numpy>=1.21', 'scipy>=1.10', 'networkx',
                            'pandas'],
          tests_require=['pytest'],
          keywords=['sentence', 'embeddings', 'contrastive', 'denoising',
                    'clinical', 'nlp'],
          classifiers=[
            'Development Status :: 3 - Alpha',
            'Environment :: Console',
            'Intended Audience :: Science/Research',
            'License :: OSI Approved :: BSD License',
            'Operating System :: OS Independent',
            'Programming Language :: Python :: 3',
            'Topic :: Scientific/Engineering :: Artificial Intelligence',
            'Topic :: Text Processing :: Linguistic',
            ],
          )


if __name__ == '__main__':
    main()
