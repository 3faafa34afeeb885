from abc import ABCMeta, abstractmethod
import collections

import numpy as np
import pandas as pd

from hybridse.autodiff import backward
from hybridse.encoder import encode_corpus
from hybridse.errors import UsageError
from hybridse.logging import get_logger
from hybridse.optim import Adam
from hybridse.util import atomic_write, derive_seeds


class Trainer(object, metaclass=ABCMeta):
    """An abstract base class for self-supervised fine-tuning of an encoder.

    Subclasses define the per-batch loss; the base class owns the seeded
    batch stream, the optimizer loop and the loss trace. The model passed
    in is never modified: training runs on a copy.

    Parameters
    ----------
    model : hybridse.encoder.EncoderModel
        Starting point for training.
    config : hybridse.config.Config
        Must provide ``batch_size``, ``steps``, ``lr`` and ``seed``.
    verbose : bool or int, optional (default: False)
        Sets the verbosity level of the logger. False keeps the package
        default level, True is DEBUG.
    run_name : str, optional
        Prefixed to every log message of this trainer.

    Attributes
    ----------
    model : EncoderModel
        The model passed to the constructor (unchanged).
    config : Config
    """
    #: Name recorded in results and stores
    name = None

    @abstractmethod
    def __init__(self, model, config, verbose=False, run_name=None):
        self._logger = get_logger(self.__module__,
                                  run_name=run_name or self.name,
                                  log_level=verbose)
        self.model = model
        self.config = config
        self.verbose = verbose

    @abstractmethod
    def _prepare(self):
        """Working copies of the trained modules.

        Returns
        -------
        OrderedDict
            Parameter name to Tensor, covering everything the optimizer
            updates.
        """

    @abstractmethod
    def loss(self, batch, seed):
        """Scalar loss Tensor of one batch of id sequences"""

    @abstractmethod
    def _result(self, losses, grad_norms):
        """Wrap the trained modules into a :class:`TrainingResult`"""

    def min_corpus_size(self):
        return self.config.batch_size

    def batches(self, count, rng):
        """Endless stream of index batches over ``count`` items.

        Each epoch is a fresh permutation drawn from ``rng``; a batch never
        spans two epochs, so leftovers smaller than the batch are skipped.
        """
        size = min(self.config.batch_size, count)
        while True:
            order = rng.permutation(count)
            for start in range(0, count - size + 1, size):
                yield order[start:start + size]

    def train(self, sequences):
        """Run ``config.steps`` optimizer updates.

        Parameters
        ----------
        sequences : list of list of int
            Encoded training sentences (see
            :func:`hybridse.encoder.encode_corpus`).

        Returns
        -------
        TrainingResult
        """
        sequences = list(sequences)
        if len(sequences) < self.min_corpus_size() or not sequences:
            raise UsageError(
                '{} needs at least {} sentences, got {}'.format(
                    self.__class__.__name__, max(1, self.min_corpus_size()),
                    len(sequences)))
        parameters = self._prepare()
        steps = self.config.steps
        self._logger.info('Training started: %d sentences, %d steps, batch '
                          'size %d', len(sequences), steps,
                          self.config.batch_size)
        optimizer = Adam(parameters, lr=self.config.lr)
        batch_seed, step_seed = derive_seeds(self.config.seed, 2)
        batch_stream = self.batches(len(sequences),
                                    np.random.default_rng(batch_seed))
        seed_stream = np.random.default_rng(step_seed)
        losses, grad_norms = [], []
        for step in range(steps):
            batch = [sequences[i] for i in next(batch_stream)]
            loss = self.loss(batch, int(seed_stream.integers(2 ** 31 - 1)))
            backward(loss)
            grad_norms.append(optimizer.step())
            losses.append(float(loss.item()))
            self._logger.debug('step %d loss %.6f grad_norm %.4f', step + 1,
                               losses[-1], grad_norms[-1])
        result = self._result(losses, grad_norms)
        if steps:
            self._logger.info('Training complete: loss %.4f -> %.4f '
                              '(first/last window means)',
                              result.window_mean(first=True),
                              result.window_mean(first=False))
        return result

    def train_corpus(self, corpus, vocab):
        """Encode records or strings with ``vocab``, then :meth:`train`"""
        return self.train(encode_corpus(self.model, vocab, corpus))


class TrainingResult(object):
    """Outcome of one training run.

    Attributes
    ----------
    trainer : str
        Name of the trainer that produced the result.
    model : EncoderModel
        The trained encoder.
    losses : ndarray
        Loss of every step, in order.
    grad_norms : ndarray
        Global gradient norm of every step, before clipping.
    extras : dict
        Trainer-specific artifacts (e.g. the TSDAE decoder).
    """
    def __init__(self, trainer, model, losses, grad_norms, extras=None):
        self.trainer = trainer
        self.model = model
        self.losses = np.asarray(losses, dtype=np.float64)
        self.grad_norms = np.asarray(grad_norms, dtype=np.float64)
        self.extras = collections.OrderedDict(extras or {})

    def __getattr__(self, item):
        try:
            return self.__dict__['extras'][item]
        except KeyError:
            raise AttributeError(item)

    def __len__(self):
        return len(self.losses)

    @property
    def dataframe(self):
        """Per-step losses and gradient norms as a
        :py:class:`pandas.DataFrame` indexed by step (from 1)."""
        index = pd.Index(np.arange(1, len(self.losses) + 1), name='step')
        return pd.DataFrame({'loss': self.losses,
                             'grad_norm': self.grad_norms}, index=index)

    def window_mean(self, first=True, size=20):
        """Mean loss of the first (or last) ``size`` steps"""
        if not len(self.losses):
            raise UsageError('No training steps were run')
        window = self.losses[:size] if first else self.losses[-size:]
        return float(window.mean())

    def save_trace(self, path):
        """Write ``step<TAB>loss`` lines"""
        with atomic_write(path, 'w', encoding='utf-8') as f:
            for step, loss in enumerate(self.losses, 1):
                f.write('{}\t{!r}\n'.format(step, float(loss)))


def read_trace(path):
    """Inverse of :meth:`TrainingResult.save_trace`, as a loss Series"""
    return pd.read_csv(path, sep='\t', header=None, names=['step', 'loss'],
                       index_col='step')['loss']
