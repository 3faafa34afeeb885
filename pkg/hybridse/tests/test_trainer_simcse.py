import numpy as np
import pytest

from hybridse.config import EncoderConfig, SimcseConfig
from hybridse.encoder import EncoderModel
from hybridse.errors import ConfigurationError, NumericError, ShapeError, \
    UsageError
from hybridse.testing import assert_gradients_match, with_float64
from hybridse.trainer import read_trace, SimcseTrainer, train_simcse
from hybridse.trainer.simcse import info_nce_loss, make_views, PairBatch


def _oracle(first, second, temperature):
    """Row-by-row softmax cross-entropy over all pairwise cosines"""
    n = first.shape[0]
    total = 0.0
    for i in range(n):
        logits = []
        for j in range(n):
            cos = first[i] @ second[j] / (np.linalg.norm(first[i]) *
                                          np.linalg.norm(second[j]))
            logits.append(cos / temperature)
        logits = np.array(logits)
        top = logits.max()
        log_z = top + np.log(np.sum(np.exp(logits - top)))
        total += log_z - logits[i]
    return total / n


def _tiny_model(dropout_rate=0.1, seed=0):
    return EncoderModel(EncoderConfig(vocab_size=24, d_model=8, n_layers=1,
                                      n_heads=2, d_ffn=16, max_seq_len=12,
                                      dropout_rate=dropout_rate), seed=seed)


def _tiny_corpus(n=12):
    return [[2, 4 + i % 11, 5 + (3 * i) % 13, 4 + (5 * i) % 17, 3]
            for i in range(n)]


def test_single_row_batch_has_zero_loss():
    z = np.random.default_rng(0).normal(size=(1, 5))
    assert info_nce_loss(PairBatch(z, z * 2.0)).item() == 0.0


@with_float64
@pytest.mark.parametrize('n', [2, 4, 8])
def test_identical_rows_give_log_n(n):
    z = np.tile(np.random.default_rng(n).normal(size=(1, 6)), (n, 1))
    loss = info_nce_loss(PairBatch(z, z), temperature=0.05).item()
    assert abs(loss - np.log(n)) < 1e-6


@with_float64
def test_matches_oracle():
    rng = np.random.default_rng(1)
    for temperature in (0.05, 0.5, 1.0):
        first, second = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
        loss = info_nce_loss(PairBatch(first, second), temperature).item()
        assert abs(loss - _oracle(first, second, temperature)) < 1e-6


@with_float64
def test_invariant_to_row_scaling_and_permutation():
    rng = np.random.default_rng(2)
    first, second = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
    base = info_nce_loss(PairBatch(first, second), 0.1).item()
    scales = rng.uniform(0.1, 10.0, size=(5, 1))
    scaled = info_nce_loss(PairBatch(first * scales, second), 0.1).item()
    order = rng.permutation(5)
    permuted = info_nce_loss(PairBatch(first[order], second[order]),
                             0.1).item()
    assert abs(base - scaled) < 1e-6
    assert abs(base - permuted) < 1e-6
    assert base >= 0


def test_info_nce_gradient():
    rng = np.random.default_rng(3)
    for _ in range(10):
        assert_gradients_match(
            lambda a, b: info_nce_loss(PairBatch(a, b), 0.5),
            [rng.normal(size=(4, 5)), rng.normal(size=(4, 5))])


def test_zero_row_rejected():
    z = np.ones((3, 4))
    z[2] = 0.0
    with pytest.raises(NumericError):
        info_nce_loss(PairBatch(np.ones((3, 4)), z))


def test_view_shapes_must_match():
    with pytest.raises(ShapeError):
        info_nce_loss(PairBatch(np.ones((3, 4)), np.ones((2, 4))))


class TestViews(object):
    def setup_method(self):
        self.model = _tiny_model()
        self.batch = _tiny_corpus(8)

    def test_views_differ_but_align(self):
        views = make_views(self.model, self.batch, seed=5)
        assert views.first.shape == views.second.shape == (8, 8)
        assert not np.array_equal(views.first.data, views.second.data)

    def test_same_seed_same_views(self):
        a = make_views(self.model, self.batch, seed=5)
        b = make_views(self.model, self.batch, seed=5)
        assert np.array_equal(a.first.data, b.first.data)
        assert np.array_equal(a.second.data, b.second.data)

    def test_views_need_dropout(self):
        with pytest.raises(ConfigurationError):
            make_views(_tiny_model(dropout_rate=0.0), self.batch, seed=0)


class TestSimcseTrainer(object):
    def setup_method(self):
        self.model = _tiny_model()
        self.corpus = _tiny_corpus()
        self.config = SimcseConfig(batch_size=4, steps=3, seed=7)

    def test_input_model_untouched(self):
        before = self.model.copy()
        result = train_simcse(self.model, self.corpus, self.config)
        assert self.model.same_parameters(before)
        assert not result.model.same_parameters(before)
        assert len(result) == 3
        assert result.trainer == 'simcse'

    def test_identical_seeds_identical_traces(self):
        a = train_simcse(self.model, self.corpus, self.config)
        b = train_simcse(self.model, self.corpus, self.config)
        assert np.array_equal(a.losses, b.losses)
        assert a.model.same_parameters(b.model)
        c = train_simcse(self.model, self.corpus, self.config.replace(seed=8))
        assert not np.array_equal(a.losses, c.losses)

    def test_zero_steps_is_a_no_op(self):
        result = train_simcse(self.model, self.corpus,
                              self.config.replace(steps=0))
        assert result.model.same_parameters(self.model)
        assert len(result.losses) == 0

    def test_corpus_smaller_than_batch(self):
        with pytest.raises(UsageError):
            train_simcse(self.model, self.corpus[:3], self.config)

    def test_no_dropout_rejected(self):
        with pytest.raises(ConfigurationError):
            SimcseTrainer(_tiny_model(dropout_rate=0.0))

    def test_batches_stay_within_epochs(self):
        trainer = SimcseTrainer(self.model, self.config)
        stream = trainer.batches(10, np.random.default_rng(0))
        epoch = [next(stream) for _ in range(2)]
        assert all(len(b) == 4 for b in epoch)
        assert len(set(np.concatenate(epoch))) == 8

    def test_trace_file(self, tmp_path):
        result = train_simcse(self.model, self.corpus, self.config)
        path = str(tmp_path / 'simcse_loss.tsv')
        result.save_trace(path)
        trace = read_trace(path)
        assert list(trace.index) == [1, 2, 3]
        assert np.array_equal(trace.values, result.losses)
        assert list(result.dataframe.columns) == ['loss', 'grad_norm']

    def test_losses_are_finite_and_non_negative(self):
        result = train_simcse(self.model, self.corpus, self.config)
        assert np.all(np.isfinite(result.losses))
        assert np.all(result.losses >= 0)
        assert np.all(result.grad_norms >= 0)
