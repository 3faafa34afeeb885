"""
Self-supervised fine-tuning of the sentence encoder.

Two trainers share the :class:`~hybridse.trainer.base.Trainer` interface:

* :class:`~hybridse.trainer.simcse.SimcseTrainer` - contrastive learning
  with dropout-generated positive pairs
* :class:`~hybridse.trainer.tsdae.TsdaeTrainer` - reconstruction of
  word-deleted sentences through a one-vector bottleneck

Both return a :class:`~hybridse.trainer.base.TrainingResult`.
"""
from hybridse.trainer.base import Trainer, TrainingResult, read_trace
from hybridse.trainer.simcse import SimcseTrainer, train_simcse
from hybridse.trainer.tsdae import TsdaeTrainer, train_tsdae
