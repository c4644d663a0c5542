"""Minimal layer and optimizer toolkit on top of :mod:`sbdehaze.tensor`."""
from __future__ import annotations

import contextlib
import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Container whose trainable tensors are discovered from its attributes."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = value.astype(p.data.dtype, copy=True)

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def _param(array):
    return Tensor(array, requires_grad=True)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, zero=False):
        bound = 1.0 / math.sqrt(n_in)
        if zero:
            self.weight = _param(np.zeros((n_in, n_out)))
        else:
            self.weight = _param(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = _param(np.zeros(n_out))

    def forward(self, x):
        return x @ self.weight + self.bias


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=None, zero=False):
        if padding is None:
            padding = kernel // 2
        self.stride = stride
        self.padding = padding
        fan_in = c_in * kernel * kernel
        shape = (c_out, c_in, kernel, kernel)
        if zero:
            self.weight = _param(np.zeros(shape))
        else:
            bound = math.sqrt(6.0 / fan_in) / math.sqrt(2.0)
            self.weight = _param(rng.uniform(-bound, bound, size=shape))
        self.bias = _param(np.zeros(c_out))

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


@contextlib.contextmanager
def frozen(*modules):
    """Temporarily stop recording gradients for the parameters of ``modules``."""
    params = [p for m in modules for p in m.parameters()]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in params:
            p.requires_grad = True


class Adam:
    """Adaptive-moment optimizer with bias correction."""

    def __init__(self, params, lr=2e-4, betas=(0.5, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        state = {"step_count": np.array(self.step_count)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            state[f"m.{i}"] = m.copy()
            state[f"v.{i}"] = v.copy()
        return state

    def load_state_dict(self, state):
        self.step_count = int(np.asarray(state["step_count"]).reshape(-1)[0])
        for i in range(len(self.params)):
            self.m[i] = np.array(state[f"m.{i}"], dtype=self.params[i].data.dtype)
            self.v[i] = np.array(state[f"v.{i}"], dtype=self.params[i].data.dtype)
