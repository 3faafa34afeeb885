import collections

import numpy as np
import pytest

from hybridse import autodiff as ad
from hybridse.errors import ShapeError, TrainingError
from hybridse.optim import Adam, adam_step, clip_grad_norm, global_norm, \
    OptimizerState


def test_first_step_moves_by_lr():
    # bias correction makes the first update exactly lr * sign(grad)
    params = {'w': np.array([1.0, -1.0, 0.5])}
    state = OptimizerState(lr=0.01)
    adam_step(params, {'w': np.array([3.0, -0.2, 1e-3])}, state)
    assert np.allclose(params['w'], [0.99, -0.99, 0.49], atol=1e-6)
    assert state.step == 1


def test_matches_reference_update():
    rng = np.random.default_rng(0)
    w = rng.normal(size=4)
    params = {'w': w.copy()}
    state = OptimizerState(lr=0.05, beta1=0.9, beta2=0.99, epsilon=1e-8)
    m = np.zeros(4)
    v = np.zeros(4)
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step(params, {'w': g}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.99 * v + 0.01 * g * g
        w = w - 0.05 * (m / (1 - 0.9 ** t)) / \
            (np.sqrt(v / (1 - 0.99 ** t)) + 1e-8)
    assert np.allclose(params['w'], w)


def test_missing_gradient_counts_as_zero():
    params = {'a': np.ones(2), 'b': np.ones(2)}
    adam_step(params, {'a': np.ones(2)}, OptimizerState())
    assert np.array_equal(params['b'], np.ones(2))


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step({'w': np.ones(2)}, {'w': np.ones(3)}, OptimizerState())


def test_non_finite_gradient_names_parameter():
    with pytest.raises(TrainingError) as excinfo:
        adam_step({'w': np.ones(2)}, {'w': np.array([1.0, np.nan])},
                  OptimizerState())
    assert excinfo.value.parameter_name == 'w'


def test_clip_grad_norm():
    grads = collections.OrderedDict([('a', np.array([3.0])),
                                     ('b', np.array([4.0]))])
    assert global_norm(grads) == 5.0
    norm = clip_grad_norm(grads, 1.0)
    assert norm == 5.0
    assert np.isclose(global_norm(grads), 1.0)
    assert np.allclose(grads['a'] / grads['b'], 0.75)


def test_clip_leaves_small_gradients():
    grads = {'a': np.array([0.3, 0.4])}
    clip_grad_norm(grads, 1.0)
    assert np.allclose(grads['a'], [0.3, 0.4])


def test_adam_minimizes_quadratic():
    w = ad.Tensor(np.array([2.0, -3.0]), requires_grad=True)
    optimizer = Adam({'w': w}, lr=0.1)
    for _ in range(300):
        ad.backward(ad.sum(w * w))
        optimizer.step()
    assert np.all(np.abs(w.data) < 0.2)
    assert w.grad is None


def test_step_reports_unclipped_norm():
    w = ad.Tensor(np.zeros(2), requires_grad=True)
    optimizer = Adam({'w': w}, lr=0.1, clip_norm=1.0)
    ad.backward(ad.sum(w * np.array([30.0, 40.0])))
    assert np.isclose(optimizer.step(), 50.0)
