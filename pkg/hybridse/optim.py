"""
Adam with bias correction, and global-norm gradient clipping.
"""
import collections

import numpy as np

from hybridse.errors import ShapeError, TrainingError


class OptimizerState(object):
    """Moment accumulators and hyperparameters of an Adam run.

    Attributes
    ----------
    m, v : OrderedDict
        First and second moment arrays, keyed by parameter name.
    step : int
        Number of updates applied so far.
    """
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = collections.OrderedDict()
        self.v = collections.OrderedDict()
        self.step = 0

    def __repr__(self):
        return 'OptimizerState(lr={}, step={}, parameters={})'.format(
            self.lr, self.step, len(self.m))


def _check_finite(grads):
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError('Non-finite gradient for parameter '
                                '"{}"'.format(name), parameter_name=name)


def adam_step(params, grads, state):
    """Apply one Adam update in place.

    Parameters
    ----------
    params : dict
        Parameter arrays keyed by name; updated in place.
    grads : dict
        Gradient arrays with the same keys and shapes. Missing keys count as
        zero gradients.
    state : OptimizerState
        Moment accumulators; created on first use for each parameter.

    Returns
    -------
    (params, state)

    Examples
    --------
    >>> import numpy as np
    >>> params = {'w': np.array([0.0])}
    >>> state = OptimizerState(lr=0.1)
    >>> _ = adam_step(params, {'w': np.array([1.0])}, state)
    >>> round(float(params['w'][0]), 6)
    -0.1
    """
    _check_finite(grads)
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(value)
        elif grad.shape != value.shape:
            raise ShapeError('adam_step[{}]'.format(name), value.shape,
                             grad.shape)
        if name not in state.m:
            state.m[name] = np.zeros_like(value)
            state.v[name] = np.zeros_like(value)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        m_hat = m / bias1
        v_hat = v / bias2
        value -= (state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)) \
            .astype(value.dtype)
    return params, state


def global_norm(grads):
    total = 0.0
    for grad in grads.values():
        total += float(np.sum(np.square(grad, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_grad_norm(grads, max_norm):
    """Rescale gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for name in grads:
            grads[name] = (grads[name] * factor).astype(grads[name].dtype)
    return norm


class Adam(object):
    """Adam over the named gradient-requiring tensors of a model.

    Parameters
    ----------
    parameters : OrderedDict
        Name to :class:`hybridse.autodiff.Tensor`.
    lr, beta1, beta2, epsilon : float
    clip_norm : float or None
        Global-norm clipping threshold applied before every update.
    """
    def __init__(self, parameters, lr=1e-3, beta1=0.9, beta2=0.999,
                 epsilon=1e-8, clip_norm=1.0):
        self.parameters = collections.OrderedDict(parameters)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2,
                                    epsilon=epsilon)
        self.clip_norm = clip_norm

    def zero_grad(self):
        for tensor in self.parameters.values():
            tensor.zero_grad()

    def step(self, grads=None):
        """Update the parameters from ``grads`` or their ``.grad`` fields.

        Returns the global gradient norm before clipping.
        """
        if grads is None:
            grads = collections.OrderedDict(
                (name, t.grad) for name, t in self.parameters.items()
                if t.grad is not None)
        else:
            grads = collections.OrderedDict(grads)
        _check_finite(grads)
        norm = global_norm(grads)
        if self.clip_norm is not None:
            clip_grad_norm(grads, self.clip_norm)
        arrays = collections.OrderedDict(
            (name, t.data) for name, t in self.parameters.items())
        adam_step(arrays, grads, self.state)
        self.zero_grad()
        return norm
