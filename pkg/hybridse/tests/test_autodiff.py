import numpy as np
import pytest
import scipy.special

from hybridse import autodiff as ad
from hybridse.errors import InputError, NumericError, ShapeError, UsageError
from hybridse.testing import assert_gradients_match, check_gradients, \
    with_float64

N_INSTANCES = 50


def _instances(seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(N_INSTANCES):
        yield rng


def _weighted(out, weights):
    return ad.sum(out * weights)


def _away_from_zero(rng, shape):
    """Values with |x| >= 0.1 so kinks stay out of the difference stencil"""
    x = rng.uniform(0.1, 2.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def test_add_broadcast_gradient():
    for rng in _instances(1):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4,))
        w = rng.normal(size=(3, 4))
        assert_gradients_match(lambda x, y: _weighted(ad.add(x, y), w),
                               [a, b])


def test_mul_gradient():
    for rng in _instances(2):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 1))
        w = rng.normal(size=(2, 3))
        assert_gradients_match(lambda x, y: _weighted(ad.mul(x, y), w),
                               [a, b])


def test_matmul_gradient():
    for rng in _instances(3):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        w = rng.normal(size=(3, 2))
        assert_gradients_match(lambda x, y: _weighted(ad.matmul(x, y), w),
                               [a, b])


def test_batched_matmul_gradient():
    for rng in _instances(4):
        a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 3))
        w = rng.normal(size=(2, 3, 3))
        assert_gradients_match(lambda x, y: _weighted(ad.matmul(x, y), w),
                               [a, b])


def test_relu_gradient():
    for rng in _instances(5):
        x = _away_from_zero(rng, (3, 5))
        w = rng.normal(size=(3, 5))
        assert_gradients_match(lambda t: _weighted(ad.relu(t), w), [x])


def test_softmax_gradient():
    for rng in _instances(6):
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(3, 5))
        assert_gradients_match(lambda t: _weighted(ad.softmax(t, axis=-1),
                                                   w), [x])


def test_layer_norm_gradient():
    for rng in _instances(7):
        x = rng.normal(size=(2, 3, 6))
        gain = rng.normal(1.0, 0.2, size=6)
        bias = rng.normal(size=6)
        w = rng.normal(size=(2, 3, 6))
        assert_gradients_match(
            lambda t, g, b: _weighted(ad.layer_norm(t, g, b), w),
            [x, gain, bias])


def test_embedding_gradient():
    for rng in _instances(8):
        table = rng.normal(size=(7, 4))
        ids = rng.integers(0, 7, size=(2, 5))
        w = rng.normal(size=(2, 5, 4))
        assert_gradients_match(lambda t: _weighted(ad.embedding(t, ids), w),
                               [table])


def test_dropout_gradient():
    for i, rng in enumerate(_instances(9)):
        x = rng.normal(size=(4, 6))
        w = rng.normal(size=(4, 6))

        def fn(t):
            # identical mask on every evaluation
            return _weighted(ad.dropout(t, 0.3, np.random.default_rng(i)), w)
        assert_gradients_match(fn, [x])


def test_cross_entropy_gradient():
    for rng in _instances(10):
        logits = rng.normal(size=(5, 4))
        targets = rng.integers(0, 4, size=5)
        weights = rng.uniform(0.5, 2.0, size=5)
        assert_gradients_match(
            lambda t: ad.cross_entropy(t, targets, weights), [logits])


def test_bce_with_logits_gradient():
    for rng in _instances(11):
        logits = rng.normal(size=8)
        targets = rng.integers(0, 2, size=8)
        assert_gradients_match(
            lambda t: ad.bce_with_logits(t, targets), [logits])


def test_cosine_matrix_gradient():
    for rng in _instances(12):
        a, b = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
        w = rng.normal(size=(3, 4))
        assert_gradients_match(
            lambda x, y: _weighted(ad.cosine_matrix(x, y), w), [a, b])


def test_structural_op_gradients():
    for rng in _instances(13):
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))
        w = rng.normal(size=(7, 2))
        assert_gradients_match(
            lambda x, y: _weighted(
                ad.transpose(ad.concatenate([x, y], axis=1)), w), [a, b])
        w2 = rng.normal(size=(3, 2))
        assert_gradients_match(
            lambda x: _weighted(ad.reshape(x, (3, 2)), w2), [a])
        assert_gradients_match(
            lambda x: ad.sum(ad.mean(x, axis=0) * ad.mean(x, axis=0)), [a])


@with_float64
def test_backward_accumulates_shared_use():
    x = ad.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    grads = ad.backward(ad.sum(x * x + x))
    assert np.allclose(grads[x], [3.0, 5.0, 7.0])
    assert np.allclose(x.grad, grads[x])
    ad.backward(ad.sum(x))
    assert np.allclose(x.grad, [4.0, 6.0, 8.0])


def test_backward_needs_scalar():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(UsageError):
        ad.backward(x * 2.0)


def test_constants_receive_no_gradient():
    x = ad.Tensor(np.ones(3), requires_grad=True)
    c = ad.Tensor(np.ones(3))
    grads = ad.backward(ad.sum(x * c))
    assert c not in grads
    assert c.grad is None


def test_graph_order_and_leaves():
    a = ad.Tensor(np.ones((2, 2)), requires_grad=True, name='a')
    b = ad.Tensor(np.ones((2, 2)), requires_grad=True, name='b')
    hidden = ad.relu(a @ b)
    loss = ad.sum(hidden)
    graph = ad.ComputationGraph(loss)
    assert graph.nodes[-1] is loss
    assert set(graph.leaves()) == {a, b}
    assert graph.index[id(hidden)] < graph.index[id(loss)]
    assert hidden in graph.ancestors(loss)


def test_default_precision_is_float32():
    assert ad.Tensor([1.0]).dtype == np.float32
    with ad.precision('float64'):
        assert ad.Tensor([1.0]).dtype == np.float64
    assert ad.Tensor([1.0]).dtype == np.float32


def test_unknown_precision():
    with pytest.raises(UsageError):
        with ad.precision('float16'):
            pass


def test_no_grad_records_nothing():
    x = ad.Tensor(np.ones(2), requires_grad=True)
    with ad.no_grad():
        y = x * 3.0
    assert not y.requires_grad
    assert y.is_leaf


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError) as excinfo:
        ad.matmul(np.ones((2, 3)), np.ones((4, 2)))
    assert '(2, 3)' in str(excinfo.value)
    assert '(4, 2)' in str(excinfo.value)


def test_embedding_out_of_range():
    with pytest.raises(InputError):
        ad.embedding(np.ones((4, 2)), np.array([0, 4]))


def test_cosine_zero_row():
    with pytest.raises(NumericError) as excinfo:
        ad.cosine_matrix(np.ones((2, 3)), np.array([[1.0, 0, 0], [0, 0, 0]]))
    assert excinfo.value.row == 1


def test_non_finite_result():
    with pytest.raises(NumericError):
        ad.Tensor([1e30], dtype=np.float32) * 1e30


@with_float64
def test_cross_entropy_matches_log_softmax():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(6, 5))
    targets = rng.integers(0, 5, size=6)
    expected = -scipy.special.log_softmax(logits, axis=1)[np.arange(6),
                                                          targets].mean()
    assert np.isclose(ad.cross_entropy(ad.Tensor(logits), targets).item(),
                      expected, atol=1e-12)


def test_dropout_inactive_is_identity():
    x = ad.Tensor(np.arange(6.0))
    assert ad.dropout(x, 0.5, np.random.default_rng(0), active=False) is x


def test_dropout_is_seeded():
    x = ad.Tensor(np.ones((10, 10)))
    a = ad.dropout(x, 0.5, np.random.default_rng(3))
    b = ad.dropout(x, 0.5, np.random.default_rng(3))
    assert np.array_equal(a.data, b.data)
    assert set(np.unique(a.data)) <= {0.0, 2.0}


def test_check_gradients_detects_wrong_gradient():
    def wrong(t):
        out = ad.Tensor._wrap(t.data * 2.0, (t,), lambda g: (g * 3.0,),
                              'wrong')
        return ad.sum(out)
    assert check_gradients(wrong, [np.ones(3)]) > 0.1
