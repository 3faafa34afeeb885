"""
Hybrid sentence embeddings: contrastive (SimCSE) and denoising (TSDAE)
fine-tuning of a small transformer encoder, concatenated into one
representation, plus the preprocessing, evaluation and downstream
prediction tooling around it.
"""
from ._version import get_versions
__version__ = get_versions()['version']
del get_versions
