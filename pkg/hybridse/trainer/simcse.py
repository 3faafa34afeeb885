"""
Unsupervised contrastive fine-tuning.

Each sentence of a batch is encoded twice with independent dropout masks.
The two views of a sentence form the positive pair; the second views of
the other sentences in the batch are its negatives. The loss is the
softmax cross-entropy of temperature-scaled cosine similarities with the
matching view as the target class.
"""
import collections

import numpy as np

from hybridse import autodiff as ad
from hybridse.config import SimcseConfig
from hybridse.encoder import pad_batch
from hybridse.errors import ConfigurationError, ShapeError
from hybridse.trainer.base import Trainer, TrainingResult
from hybridse.util import derive_seeds

PairBatch = collections.namedtuple('PairBatch', ['first', 'second'])
PairBatch.__doc__ = """Two row-aligned views of the same sentences.

Attributes
----------
first, second : Tensor
    Shape (n, d); row i of both views encodes sentence i.
"""


def make_views(model, sequences, seed):
    """Encode a batch twice under independent, seeded dropout masks.

    Parameters
    ----------
    model : EncoderModel
        Must have a non-zero ``dropout_rate``.
    sequences : list of list of int
    seed : int
        Both mask streams are derived from it.

    Returns
    -------
    PairBatch
        Both views stay on the computation graph.
    """
    if model.config.dropout_rate == 0:
        raise ConfigurationError('Contrastive views need dropout_rate > 0; '
                                 'with no dropout both views are identical')
    ids, mask = pad_batch(sequences)
    seed_first, seed_second = derive_seeds(seed, 2)
    return PairBatch(
        model.encode(ids, mask, dropout_active=True, seed=seed_first),
        model.encode(ids, mask, dropout_active=True, seed=seed_second))


def info_nce_loss(batch, temperature=0.05):
    """Mean InfoNCE loss of a :class:`PairBatch`.

    For row i the logits are ``cos(first_i, second_j) / temperature`` over
    every j, and the target class is j = i.

    Raises
    ------
    NumericError
        If any row of either view has zero norm.

    Examples
    --------
    >>> import numpy as np
    >>> z = ad.Tensor(np.ones((4, 3)))
    >>> round(info_nce_loss(PairBatch(z, z)).item(), 5) == round(np.log(4), 5)
    True
    """
    first = ad.as_tensor(batch.first)
    second = ad.as_tensor(batch.second)
    if first.shape != second.shape:
        raise ShapeError('info_nce_loss', first.shape, second.shape)
    logits = ad.scale(ad.cosine_matrix(first, second), 1.0 / temperature)
    return ad.cross_entropy(logits, np.arange(first.shape[0]))


class SimcseTrainer(Trainer):
    """Contrastive trainer with in-batch negatives.

    Parameters
    ----------
    model : EncoderModel
    config : SimcseConfig, optional
    verbose, run_name
        See :class:`hybridse.trainer.base.Trainer`.

    Examples
    --------
    >>> from hybridse.config import EncoderConfig, SimcseConfig
    >>> from hybridse.encoder import EncoderModel
    >>> model = EncoderModel(EncoderConfig(vocab_size=20, d_model=8,
    ...                                    n_heads=2, d_ffn=16))
    >>> corpus = [[2, 4 + i % 10, 5 + i % 7, 3] for i in range(8)]
    >>> result = SimcseTrainer(model, SimcseConfig(batch_size=4,
    ...                                            steps=2)).train(corpus)
    >>> len(result.losses)
    2
    """
    name = 'simcse'

    def __init__(self, model, config=None, verbose=False, run_name=None):
        super(SimcseTrainer, self).__init__(
            model, config if config is not None else SimcseConfig(),
            verbose=verbose, run_name=run_name)
        if model.config.dropout_rate == 0:
            raise ConfigurationError('Contrastive training needs '
                                     'dropout_rate > 0')
        self._working = None

    def _prepare(self):
        self._working = self.model.copy()
        return self._working.parameters()

    def loss(self, batch, seed):
        return info_nce_loss(make_views(self._working, batch, seed),
                             self.config.temperature)

    def _result(self, losses, grad_norms):
        return TrainingResult(self.name, self._working, losses, grad_norms)


def train_simcse(model, corpus, config=None, vocab=None, verbose=False):
    """Contrastive fine-tuning of a copy of ``model``.

    Parameters
    ----------
    model : EncoderModel
    corpus : list
        Encoded id sequences, or records/strings when ``vocab`` is given.
    config : SimcseConfig, optional
    vocab : Vocabulary, optional

    Returns
    -------
    TrainingResult
        ``result.model`` is the trained encoder; ``result.losses`` the
        per-step loss trace.
    """
    trainer = SimcseTrainer(model, config, verbose=verbose)
    if vocab is not None:
        return trainer.train_corpus(corpus, vocab)
    return trainer.train(corpus)
