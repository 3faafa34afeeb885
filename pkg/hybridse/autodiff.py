"""
Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Every operation in this module that
receives at least one gradient-requiring input records its inputs and a
backward closure on the output; :func:`backward` walks the resulting
:class:`ComputationGraph` in reverse topological order.

Training runs in 32-bit floats. Wrap code in ``with precision('float64'):``
to build tensors in 64-bit, which the gradient and metric oracle tests use.

Examples
--------
>>> import numpy as np
>>> x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
>>> loss = (x * x).sum()
>>> grads = backward(loss)
>>> grads[x].tolist()
[2.0, -4.0, 6.0]
"""
import contextlib
import threading

import networkx as nx
import numpy as np
import scipy.special

from hybridse.errors import InputError, NumericError, ShapeError, UsageError
from hybridse.logging import get_logger, EXTENDED_DEBUG

_logger = get_logger(__name__)

_DTYPES = {'float32': np.float32, 'float64': np.float64}


class _LocalState(threading.local):
    def __init__(self):
        self.dtype = np.float32
        self.grad_enabled = True


_state = _LocalState()


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the floating point type of new tensors.

    Parameters
    ----------
    dtype : {'float32', 'float64'} or numpy dtype
    """
    if isinstance(dtype, str):
        try:
            dtype = _DTYPES[dtype]
        except KeyError:
            raise UsageError('Unsupported precision "{}"; choose one of '
                             '{}'.format(dtype, ', '.join(_DTYPES)))
    previous = _state.dtype
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


@contextlib.contextmanager
def no_grad():
    """Evaluate operations without recording them on a graph"""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor(object):
    """A real-valued array that can take part in differentiation.

    Parameters
    ----------
    data : array_like
        Values; converted to the current default floating point type unless
        ``dtype`` is given.
    requires_grad : bool
        Whether :func:`backward` should produce a gradient for this tensor.
    name : str, optional
        Used in error messages and graph dumps.
    dtype : numpy dtype, optional
    """
    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=dtype or _state.dtype)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad = None
        self.op = 'leaf'
        self._parents = ()
        self._backward = None

    @classmethod
    def _wrap(cls, array, parents, backward_fn, op):
        out = cls.__new__(cls)
        out.data = array
        out.name = None
        out.grad = None
        out.op = op
        requires = _state.grad_enabled and \
            any(p.requires_grad for p in parents)
        out.requires_grad = requires
        if requires:
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out._parents = ()
            out._backward = None
        if not np.all(np.isfinite(array)):
            raise NumericError('Operation {} produced non-finite '
                               'values'.format(op))
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        return backward(self)

    def __repr__(self):
        label = self.name or self.op
        return 'Tensor({}, shape={}, dtype={}{})'.format(
            label, self.shape, self.dtype.name,
            ', requires_grad=True' if self.requires_grad else '')

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = shape[0]
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = axes[0]
        return transpose(self, axes or None)


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


class ComputationGraph(object):
    """The gradient-requiring ancestry of a tensor, topologically ordered.

    Nodes are the tensors that require gradients and can reach the root.
    Constants are not part of the graph, so they never receive gradients.

    Attributes
    ----------
    nodes : list of Tensor
        Topological order, inputs first and the root last.
    index : dict
        Maps ``id(tensor)`` to its position in ``nodes``.
    """
    def __init__(self, root):
        graph = nx.DiGraph()
        tensors = {id(root): root}
        graph.add_node(id(root))
        stack = [root]
        while stack:
            node = stack.pop()
            for parent in node._parents:
                if not parent.requires_grad:
                    continue
                if id(parent) not in tensors:
                    tensors[id(parent)] = parent
                    stack.append(parent)
                graph.add_edge(id(parent), id(node))
        if not nx.is_directed_acyclic_graph(graph):
            raise UsageError('Computation graph contains a cycle')
        # insertion order is fixed by the traversal, so the sort is too
        order = list(nx.topological_sort(graph))
        self.root = root
        self.nodes = [tensors[n] for n in order]
        self.index = {n: i for i, n in enumerate(order)}
        self._graph = graph
        _logger.log(EXTENDED_DEBUG, 'Computation graph with %d nodes and '
                    '%d edges', graph.number_of_nodes(),
                    graph.number_of_edges())

    def __len__(self):
        return len(self.nodes)

    def leaves(self):
        """Gradient-requiring inputs: usually the model parameters"""
        return [t for t in self.nodes if t.is_leaf]

    def ancestors(self, tensor):
        return [self.nodes[self.index[n]]
                for n in nx.ancestors(self._graph, id(tensor))]


def backward(loss, graph=None):
    """Gradients of a scalar with respect to every gradient-requiring input.

    Leaf tensors additionally accumulate the result into ``.grad``.

    Parameters
    ----------
    loss : Tensor
        Scalar (single element) tensor.
    graph : ComputationGraph, optional
        A previously built graph rooted at ``loss``.

    Returns
    -------
    dict
        Maps each leaf tensor in the graph to its gradient array.
    """
    if loss.size != 1:
        raise UsageError('backward() needs a scalar loss, got shape '
                         '{}'.format(loss.shape))
    if graph is None:
        graph = ComputationGraph(loss)
    elif graph.root is not loss:
        raise UsageError('Graph was built for a different loss tensor')

    pending = {id(loss): np.ones_like(loss.data)}
    result = {}
    for node in reversed(graph.nodes):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            if node.requires_grad:
                result[node] = grad
                node.grad = grad if node.grad is None else node.grad + grad
            continue
        parent_grads = node._backward(grad)
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = parent_grad
    return result


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError('add', a.shape, b.shape)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return Tensor._wrap(out, (a, b), _backward, 'add')


def mul(a, b):
    """Elementwise product with broadcasting"""
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError('mul', a.shape, b.shape)

    def _backward(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))
    return Tensor._wrap(out, (a, b), _backward, 'mul')


def scale(a, factor):
    """Multiply by a constant scalar"""
    a = as_tensor(a)
    factor = a.dtype.type(factor)

    def _backward(g):
        return (g * factor,)
    return Tensor._wrap(a.data * factor, (a,), _backward, 'scale')


def matmul(a, b):
    """Matrix product over the last two axes, broadcasting leading axes.

    Raises
    ------
    ShapeError
        If the inner dimensions disagree or either input has fewer than two
        axes; the message names both shapes.
    """
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError('matmul', a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError('matmul', a.shape, b.shape)

    def _backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) \
            if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) \
            if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))
    return Tensor._wrap(out, (a, b), _backward, 'matmul')


def relu(x):
    x = as_tensor(x)
    positive = x.data > 0

    def _backward(g):
        return (g * positive,)
    return Tensor._wrap(np.where(positive, x.data, 0).astype(x.dtype), (x,),
                        _backward, 'relu')


def softmax(x, axis=-1):
    """Softmax along ``axis``, computed with max-subtraction"""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)
    return Tensor._wrap(out, (x,), _backward, 'softmax')


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then apply gain and bias"""
    x = as_tensor(x)
    gain = as_tensor(gain, x.dtype)
    bias = as_tensor(bias, x.dtype)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeError('layer_norm', x.shape, gain.shape, bias.shape)
    width = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv
    out = xhat * gain.data + bias.data

    def _backward(g):
        gxhat = g * gain.data
        gx = inv / width * (width * gxhat
                            - gxhat.sum(axis=-1, keepdims=True)
                            - xhat * (gxhat * xhat).sum(axis=-1,
                                                        keepdims=True))
        flat = (-1, width)
        ggain = (g * xhat).reshape(flat).sum(axis=0)
        gbias = g.reshape(flat).sum(axis=0)
        return gx.astype(x.dtype), ggain, gbias
    return Tensor._wrap(out.astype(x.dtype), (x, gain, bias), _backward,
                        'layer_norm')


def embedding(table, ids):
    """Row lookup ``table[ids]`` for an integer array of any shape"""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and not np.issubdtype(ids.dtype, np.integer):
        raise InputError('Token ids must be integers, got {}'.format(
            ids.dtype))
    bad = ids[(ids < 0) | (ids >= table.shape[0])]
    if bad.size:
        raise InputError('Token id {} out of range [0, {})'.format(
            bad.flat[0], table.shape[0]))

    def _backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)
    return Tensor._wrap(table.data[ids], (table,), _backward, 'embedding')


def dropout(x, rate, rng, active=True):
    """Zero entries with probability ``rate`` and rescale the rest.

    The keep mask is drawn from ``rng`` (a numpy Generator), so a fixed seed
    reproduces the same masks in the same order.
    """
    x = as_tensor(x)
    if not active or rate == 0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / \
        x.dtype.type(1.0 - rate)

    def _backward(g):
        return (g * keep,)
    return Tensor._wrap(x.data * keep, (x,), _backward, 'dropout')


def cross_entropy(logits, targets, weights=None):
    """Softmax cross-entropy of integer class targets.

    Parameters
    ----------
    logits : Tensor
        Shape (n, classes).
    targets : array_like of int
        Shape (n,).
    weights : array_like, optional
        Per-row weights; the loss is ``sum(w * nll) / sum(w)``. Without
        weights every row counts equally.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    if logits.ndim != 2 or targets.shape != logits.shape[:1]:
        raise ShapeError('cross_entropy', logits.shape, targets.shape)
    n, classes = logits.shape
    if n and (targets.min() < 0 or targets.max() >= classes):
        raise InputError('Target class out of range [0, {})'.format(classes))
    if weights is None:
        weights = np.ones(n)
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        raise InputError('cross_entropy weights must have a positive sum')
    log_p = scipy.special.log_softmax(logits.data.astype(np.float64),
                                      axis=1)
    rows = np.arange(n)
    nll = -log_p[rows, targets]
    loss = np.asarray((weights * nll).sum() / total, dtype=logits.dtype)

    def _backward(g):
        grad = np.exp(log_p)
        grad[rows, targets] -= 1.0
        grad *= (weights / total)[:, None] * g
        return (grad.astype(logits.dtype),)
    return Tensor._wrap(loss, (logits,), _backward, 'cross_entropy')


def bce_with_logits(logits, targets):
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets"""
    logits = as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    x = logits.data.astype(np.float64)
    losses = np.maximum(x, 0) - x * y + np.log1p(np.exp(-np.abs(x)))
    loss = np.asarray(losses.mean(), dtype=logits.dtype)

    def _backward(g):
        return (((scipy.special.expit(x) - y) * g / x.size)
                .astype(logits.dtype),)
    return Tensor._wrap(loss, (logits,), _backward, 'bce_with_logits')


def cosine_matrix(a, b):
    """Pairwise cosine similarities between the rows of two matrices.

    Raises
    ------
    NumericError
        If any row has zero norm; the message names the input and row.
    """
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError('cosine_matrix', a.shape, b.shape)
    na = np.linalg.norm(a.data, axis=1, keepdims=True)
    nb = np.linalg.norm(b.data, axis=1, keepdims=True)
    for label, norms in (('first', na), ('second', nb)):
        zero = np.flatnonzero(norms[:, 0] == 0)
        if zero.size:
            raise NumericError('Zero-norm embedding at row {} of the {} '
                               'input'.format(zero[0], label), row=zero[0])
    an = a.data / na
    bn = b.data / nb
    out = an @ bn.T

    def _backward(g):
        gan = g @ bn
        gbn = g.T @ an
        ga = (gan - an * (gan * an).sum(axis=1, keepdims=True)) / na
        gb = (gbn - bn * (gbn * bn).sum(axis=1, keepdims=True)) / nb
        return ga, gb
    return Tensor._wrap(out, (a, b), _backward, 'cosine_matrix')


def concatenate(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError('concatenate', *[t.shape for t in tensors])
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, bounds, axis=axis))
    return Tensor._wrap(out, tensors, _backward, 'concatenate')


def sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)
    return Tensor._wrap(out, (x,), _backward, 'sum')


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.size if axis is None else \
        np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims))

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((np.broadcast_to(g, x.shape) / count).astype(x.dtype),)
    return Tensor._wrap(out, (x,), _backward, 'mean')


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError('reshape', x.shape, shape)

    def _backward(g):
        return (g.reshape(x.shape),)
    return Tensor._wrap(out, (x,), _backward, 'reshape')


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)

    def _backward(g):
        return (np.transpose(g, inverse),)
    return Tensor._wrap(np.transpose(x.data, axes), (x,), _backward,
                        'transpose')
