"""Full-size training runs on the synthetic two-topic corpus.

These take minutes; skip them with ``pytest -m "not slow"``.
"""
import numpy as np
import pytest

from hybridse.benchmark import kmeans
from hybridse.config import EncoderConfig, TsdaeConfig
from hybridse.corpus import build_vocab
from hybridse.encoder import embed_sentences, encode_corpus, EncoderModel
from hybridse.metrics import v_measure
from hybridse.store import concat_embeddings, l2_normalize
from hybridse.synthetic import generate_synthetic_corpus
from hybridse.trainer.simcse import train_simcse
from hybridse.trainer.tsdae import corrupt, majority_accuracy, \
    reconstruction_accuracy, reconstruction_loss, train_tsdae

pytestmark = pytest.mark.slow


def _topic_gap(store, labels):
    """Mean intra-topic cosine minus mean inter-topic cosine"""
    unit = l2_normalize(np.asarray(store.matrix, dtype=np.float64))
    cosines = unit @ unit.T
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off_diagonal = ~np.eye(len(labels), dtype=bool)
    return cosines[same & off_diagonal].mean() - cosines[~same].mean()


def _v(store, labels, seed=42):
    return v_measure(labels, kmeans(store, 2, seed=seed).labels).v


class TestSyntheticTraining(object):
    @classmethod
    def setup_class(cls):
        corpus = generate_synthetic_corpus(1000, n_topics=2, seed=42)
        cls.records, cls.labels = corpus.records, corpus.labels
        cls.vocab = build_vocab(cls.records)
        base = EncoderModel(EncoderConfig(vocab_size=len(cls.vocab)),
                            seed=42)
        cls.base = base
        cls.simcse = train_simcse(base, cls.records, vocab=cls.vocab)
        cls.tsdae = train_tsdae(base, cls.records, vocab=cls.vocab)
        cls.stores = {
            'simcse': embed_sentences(cls.simcse.model, cls.vocab,
                                      cls.records, name='simcse'),
            'tsdae': embed_sentences(cls.tsdae.model, cls.vocab,
                                     cls.records, name='tsdae'),
        }
        cls.stores['hybrid'] = concat_embeddings(cls.stores['simcse'],
                                                 cls.stores['tsdae'])

    def test_simcse_loss_decreases(self):
        first = self.simcse.window_mean(first=True)
        last = self.simcse.window_mean(first=False)
        assert last <= 0.7 * first

    def test_tsdae_loss_decreases(self):
        first = self.tsdae.window_mean(first=True)
        last = self.tsdae.window_mean(first=False)
        assert last <= 0.7 * first

    def test_simcse_separates_topics(self):
        assert _topic_gap(self.stores['simcse'], self.labels) >= 0.05

    def test_base_model_untouched(self):
        assert not self.base.same_parameters(self.simcse.model)
        assert not self.base.same_parameters(self.tsdae.model)

    def test_hybrid_clusters_topics(self):
        hybrid = _v(self.stores['hybrid'], self.labels)
        components = max(_v(self.stores['simcse'], self.labels),
                         _v(self.stores['tsdae'], self.labels))
        assert hybrid >= 0.3
        assert hybrid >= components - 0.05

    def test_reconstruction_beats_majority_token(self):
        sequences = encode_corpus(self.tsdae.model, self.vocab,
                                  self.records)
        rng = np.random.default_rng(7)
        pairs = [corrupt(ids, TsdaeConfig(), rng) for ids in sequences[:50]]
        accuracy = reconstruction_accuracy(self.tsdae.model,
                                           self.tsdae.decoder, pairs)
        assert accuracy > majority_accuracy(pairs, sequences)

    def test_decoder_uses_sentence_vector(self):
        sequences = encode_corpus(self.tsdae.model, self.vocab,
                                  self.records[:32])
        rng = np.random.default_rng(3)
        pairs = [corrupt(ids, TsdaeConfig(), rng) for ids in sequences]
        seen = reconstruction_loss(self.tsdae.model, self.tsdae.decoder,
                                   pairs).item()
        hidden = reconstruction_loss(self.tsdae.model, self.tsdae.decoder,
                                     pairs, memory_scale=0.0).item()
        assert seen != hidden
