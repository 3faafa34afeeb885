import functools

import numpy as np

from hybridse import autodiff as ad

#: Central-difference step used by :func:`numerical_gradient`
STEP = 1e-5
#: Magnitudes below this are compared absolutely in :func:`relative_error`
FLOOR = 1e-5


def with_float64(func):
    """Decorate a test to build every tensor in 64-bit precision."""
    @functools.wraps(func)
    def inner(*args, **kwargs):
        with ad.precision('float64'):
            return func(*args, **kwargs)
    return inner


def numerical_gradient(fn, arrays, step=STEP):
    """Central finite-difference gradients of a scalar function.

    Parameters
    ----------
    fn : callable
        Takes one :class:`~hybridse.autodiff.Tensor` per array and returns
        a scalar Tensor.
    arrays : list of array_like
    step : float

    Returns
    -------
    list of ndarray
        One gradient per input, evaluated in 64-bit.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    with ad.precision('float64'), ad.no_grad():
        def _value():
            return float(fn(*[ad.Tensor(a) for a in arrays]).item())
        for a in arrays:
            grad = np.zeros_like(a)
            for index in np.ndindex(*a.shape):
                original = a[index]
                a[index] = original + step
                upper = _value()
                a[index] = original - step
                lower = _value()
                a[index] = original
                grad[index] = (upper - lower) / (2 * step)
            grads.append(grad)
    return grads


def analytic_gradient(fn, arrays):
    """Gradients of ``fn`` from :func:`hybridse.autodiff.backward`"""
    with ad.precision('float64'):
        tensors = [ad.Tensor(a, requires_grad=True) for a in arrays]
        grads = ad.backward(fn(*tensors))
    return [grads.get(t, np.zeros(t.shape)) for t in tensors]


def relative_error(analytic, numeric, floor=FLOOR):
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all entries"""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) \
        if analytic.size else 0.0


def check_gradients(fn, arrays, step=STEP):
    """Largest relative error between analytic and numerical gradients"""
    return max(relative_error(a, n) for a, n in
               zip(analytic_gradient(fn, arrays),
                   numerical_gradient(fn, arrays, step)))


def assert_gradients_match(fn, arrays, tolerance=1e-4, step=STEP):
    error = check_gradients(fn, arrays, step)
    assert error <= tolerance, \
        "Gradient mismatch: max relative error %g exceeds %g" % (error,
                                                               tolerance)
