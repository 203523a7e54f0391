"""Named parameter store, gradient evaluation, FD checking and Adam."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import NonFiniteGradient


class ParamStore:
    """Named parameter tensors with matching gradient slots and Adam moments.

    Parameters are float64 and finite by construction; the step counter is
    shared across the store and advances once per `adam_step`.
    """

    def __init__(self):
        self.tensors = {}
        self._m = {}
        self._v = {}
        self.step_count = 0

    def add(self, name, value):
        if name in self.tensors:
            raise KeyError(f"parameter {name!r} already present")
        t = ad.Tensor(np.array(value, dtype=np.float64), requires_grad=True,
                      check_finite=True)
        self.tensors[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return list(self.tensors.keys())

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def ensure_grad_slots(self):
        for t in self.tensors.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    def n_parameters(self):
        return sum(t.data.size for t in self.tensors.values())

    def values_vector(self):
        return np.concatenate([t.data.ravel() for t in self.tensors.values()]) \
            if self.tensors else np.zeros(0)

    def grads_vector(self):
        self.ensure_grad_slots()
        return np.concatenate([t.grad.ravel() for t in self.tensors.values()]) \
            if self.tensors else np.zeros(0)

    def state_dict(self):
        out = {name: t.data.copy() for name, t in self.tensors.items()}
        return out

    def load_state_dict(self, state):
        for name, arr in state.items():
            if name in self.tensors:
                self.tensors[name].data = np.array(arr, dtype=np.float64)
            else:
                self.add(name, arr)


def grad(objective, params):
    """Populate every parameter's gradient slot with d(objective)/d(param).

    Returns the objective value as a float.  Raises NonFiniteGradient when
    the objective or any gradient entry is NaN/Inf.
    """
    params.zero_grads()
    out = objective(params)
    if out.data.size != 1:
        raise ValueError("objective must be scalar-valued")
    value = out.item()
    if not np.isfinite(value):
        raise NonFiniteGradient(f"objective evaluated to {value}")
    ad.backward(out)
    params.ensure_grad_slots()
    for name, t in params.tensors.items():
        if not np.all(np.isfinite(t.grad)):
            raise NonFiniteGradient(f"non-finite gradient in parameter {name!r}")
    return value


def grad_check(objective, params, h=1e-6):
    """Max over parameter entries of |analytic - FD| / max(1, |FD|).

    Central differences; the objective is evaluated with taping disabled,
    so the check costs two forward passes per scalar parameter.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grad(objective, params)
    analytic = {name: t.grad.copy() for name, t in params.tensors.items()}
    worst = 0.0
    with ad.no_grad():
        for name, t in params.tensors.items():
            flat = t.data.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = objective(params).item()
                flat[i] = orig - h
                f_minus = objective(params).item()
                flat[i] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                err = abs(analytic[name].ravel()[i] - fd) / max(1.0, abs(fd))
                if err > worst:
                    worst = err
    return worst


def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard bias-corrected Adam update; increments the step counter."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    params.ensure_grad_slots()
    params.step_count += 1
    t = params.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, tensor in params.tensors.items():
        g = tensor.grad
        m = params._m[name]
        v = params._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        tensor.data -= lr * mhat / (np.sqrt(vhat) + eps)
    return params
