"""Dense numpy tensors with define-by-run reverse-mode differentiation.

Every operation on a :class:`Tensor` that has a differentiable input records
a node holding its parents and a closure mapping the output gradient to the
parent gradients. :meth:`Tensor.backward` walks the recorded graph once in
reverse topological order.

Two global switches live in :data:`config`:

* ``dtype`` - floating precision of newly created tensors (float64 for
  gradient checks, float32 for training throughput).
* ``checked`` - validate finiteness of every result and the domain of
  ``log``/``sqrt``.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, DomainError


@dataclass
class _Config:
    dtype: type = np.float64
    checked: bool = False
    grad_enabled: bool = True


config = _Config()


def set_precision(name):
    """Switch the default float precision (``"float32"`` or ``"float64"``)."""
    config.dtype = {"float32": np.float32, "float64": np.float64}[name]


@contextlib.contextmanager
def precision(name):
    old = config.dtype
    set_precision(name)
    try:
        yield
    finally:
        config.dtype = old


@contextlib.contextmanager
def checked_mode(enabled=True):
    old = config.checked
    config.checked = enabled
    try:
        yield
    finally:
        config.checked = old


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph."""
    old = config.grad_enabled
    config.grad_enabled = False
    try:
        yield
    finally:
        config.grad_enabled = old


def _as_array(value, dtype=None):
    arr = np.asarray(value)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype.kind in "biuf":
        return arr.astype(config.dtype, copy=False)
    return arr


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """An n-dimensional real array that can take part in differentiation."""

    __array_priority__ = 100
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------
    @classmethod
    def _make(cls, data, parents, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        track = config.grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        if config.checked and data.dtype.kind == "f" and not np.all(np.isfinite(data)):
            raise DomainError("non-finite value produced")
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
        return not self._parents

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    # -- reverse pass ---------------------------------------------------------
    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires grad."""
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward() needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = _as_array(grad, self.data.dtype)
        if not self.requires_grad:
            return

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- operators --------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    # -- method aliases -----------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return tmax(self, axis, keepdims)

    def min(self, axis=None, keepdims=False):
        return tmin(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def abs(self):
        return tabs(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _binary(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"cannot broadcast {a.shape} with {b.shape}") from exc
    return a, b


# -- elementwise arithmetic ------------------------------------------------------

def add(a, b):
    a, b = _binary(a, b)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data + b.data, (a, b),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = _binary(a, b)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data - b.data, (a, b),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = _binary(a, b)
    ad, bd = a.data, b.data
    return Tensor._make(ad * bd, (a, b),
                        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = _binary(a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        ga = g / bd
        return _unbroadcast(ga, ad.shape), _unbroadcast(-ga * out, bd.shape)

    return Tensor._make(out, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return Tensor._make(-a.data, (a,), lambda g: (-g,))


def power(a, exponent):
    a = as_tensor(a)
    p = float(exponent)
    ad = a.data
    if p == 2.0:
        return Tensor._make(ad * ad, (a,), lambda g: (2.0 * g * ad,))
    return Tensor._make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1.0),))


def square(a):
    return power(a, 2)


def maximum(a, b):
    a, b = _binary(a, b)
    ad, bd = a.data, b.data
    pick = ad >= bd
    return Tensor._make(np.where(pick, ad, bd), (a, b),
                        lambda g: (_unbroadcast(np.where(pick, g, 0), ad.shape),
                                   _unbroadcast(np.where(pick, 0, g), bd.shape)))


def minimum(a, b):
    a, b = _binary(a, b)
    ad, bd = a.data, b.data
    pick = ad <= bd
    return Tensor._make(np.where(pick, ad, bd), (a, b),
                        lambda g: (_unbroadcast(np.where(pick, g, 0), ad.shape),
                                   _unbroadcast(np.where(pick, 0, g), bd.shape)))


def clip(a, lo, hi):
    """Clamp to ``[lo, hi]``; the gradient passes only where the input is inside."""
    a = as_tensor(a)
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return Tensor._make(np.clip(ad, lo, hi), (a,), lambda g: (g * inside,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    if config.checked and np.any(a.data <= 0):
        raise DomainError("log of non-positive value")
    ad = a.data
    return Tensor._make(np.log(ad), (a,), lambda g: (g / ad,))


def sqrt(a):
    a = as_tensor(a)
    if config.checked and np.any(a.data < 0):
        raise DomainError("sqrt of negative value")
    out = np.sqrt(a.data)
    return Tensor._make(out, (a,), lambda g: (g * 0.5 / out,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    ez = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez)).astype(x.dtype, copy=False)
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._make(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    return Tensor._make(a.data * scale, (a,), lambda g: (g * scale,))


def tabs(a):
    a = as_tensor(a)
    sign = np.sign(a.data)
    return Tensor._make(np.abs(a.data), (a,), lambda g: (g * sign,))


# -- reductions --------------------------------------------------------------------

def _expand_reduced(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    return Tensor._make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,),
                        lambda g: (_expand_reduced(g, shape, axis, keepdims),))


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if np.isscalar(axis) else axis
        count = int(np.prod([shape[i] for i in axes]))
    return Tensor._make(np.mean(a.data, axis=axis, keepdims=keepdims), (a,),
                        lambda g: (_expand_reduced(g / count, shape, axis, keepdims),))


def _extreme(a, axis, keepdims, fn, argfn):
    a = as_tensor(a)
    ad = a.data
    if axis is None:
        flat = argfn(ad)

        def backward(g):
            out = np.zeros_like(ad)
            out.flat[flat] = g
            return (out,)

        return Tensor._make(np.asarray(fn(ad)).reshape((1,) * ad.ndim if keepdims else ()), (a,), backward)
    idx = np.expand_dims(argfn(ad, axis=axis), axis)
    out = np.take_along_axis(ad, idx, axis=axis)

    def backward(g):
        full = np.zeros_like(ad)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(full, idx, gk, axis=axis)
        return (full,)

    return Tensor._make(out if keepdims else np.squeeze(out, axis), (a,), backward)


def tmax(a, axis=None, keepdims=False):
    """Maximum; the gradient goes to the first maximizing entry."""
    return _extreme(a, axis, keepdims, np.max, np.argmax)


def tmin(a, axis=None, keepdims=False):
    """Minimum; the gradient goes to the first minimizing entry."""
    return _extreme(a, axis, keepdims, np.min, np.argmin)


def logsumexp(a, axis=-1, keepdims=False):
    a = as_tensor(a)
    ad = a.data
    m = np.max(ad, axis=axis, keepdims=True)
    e = np.exp(ad - m)
    s = e.sum(axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = e / s

    def backward(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return (gk * soft,)

    return Tensor._make(out if keepdims else np.squeeze(out, axis), (a,), backward)


def softmax(a, axis=-1):
    a = as_tensor(a)
    ad = a.data
    e = np.exp(ad - np.max(ad, axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return Tensor._make(out, (a,), backward)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    return a - logsumexp(a, axis=axis, keepdims=True)


# -- shape manipulation ----------------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {old} to {shape}") from exc
    return Tensor._make(out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return Tensor._make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def getitem(a, index):
    a = as_tensor(a)
    if isinstance(index, Tensor):
        index = index.data
    shape, dtype = a.shape, a.data.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._make(a.data[index], (a,), backward)


def take(a, indices, axis):
    """Gather along one axis (indices may repeat; gradients are summed)."""
    a = as_tensor(a)
    indices = np.asarray(indices)
    shape, dtype = a.shape, a.data.dtype

    def backward(g):
        full = np.zeros(shape, dtype=dtype)
        moved = np.moveaxis(full, axis, 0)
        gm = np.moveaxis(g, axis, 0)
        np.add.at(moved, indices, gm)
        return (full,)

    return Tensor._make(np.take(a.data, indices, axis=axis), (a,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                        lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors),
                        lambda g: tuple(np.moveaxis(g, axis, 0)))


def pad2d(a, pad, mode="zeros"):
    """Pad the last two axes by ``pad`` on every side.

    ``mode`` is ``"zeros"``, ``"edge"`` (replicate) or ``"wrap"`` (circular).
    """
    a = as_tensor(a)
    if pad == 0:
        return a
    if mode == "zeros":
        widths = [(0, 0)] * (a.ndim - 2) + [(pad, pad), (pad, pad)]
        return Tensor._make(np.pad(a.data, widths), (a,),
                            lambda g: (g[..., pad:-pad, pad:-pad],))
    h, w = a.shape[-2:]
    if mode == "edge":
        ih = np.clip(np.arange(-pad, h + pad), 0, h - 1)
        iw = np.clip(np.arange(-pad, w + pad), 0, w - 1)
    elif mode == "wrap":
        ih = np.arange(-pad, h + pad) % h
        iw = np.arange(-pad, w + pad) % w
    else:
        raise ValueError(f"unknown pad mode {mode!r}")
    return take(take(a, ih, axis=a.ndim - 2), iw, axis=a.ndim - 1)


# -- linear algebra -------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0:
        raise DimensionError("matmul needs at least 1-D operands")
    if ad.shape[-1] != bd.shape[0 if bd.ndim == 1 else -2]:
        raise DimensionError(f"matmul shape mismatch {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def backward(g):
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if bd.ndim == 1:
            g2 = g2[..., None]
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        ga = g2 @ np.swapaxes(b2, -1, -2)
        gb = np.swapaxes(a2, -1, -2) @ g2
        ga = ga.reshape(ad.shape) if ad.ndim == 1 else _unbroadcast(ga, ad.shape)
        if bd.ndim == 1:
            gb = _unbroadcast(gb, b2.shape).reshape(bd.shape)
        else:
            gb = _unbroadcast(gb, bd.shape)
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation of ``x`` (N, C, H, W) with ``weight`` (O, C, kh, kw).

    Zero padding of ``padding`` pixels on each side; ``bias`` has shape (O,).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv2d got input {x.shape} and weight {weight.shape}")
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    xd = x.data
    if padding:
        xd = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = xd.shape[2:]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    win = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gx = None
        if x.requires_grad:
            dcols = (gm @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros((n, c, hp, wp), dtype=xd.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        gw = (gm.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    return Tensor._make(np.ascontiguousarray(out), parents, backward)


def upsample_nearest(x, factor=2):
    """Nearest-neighbour upsampling of the last two axes."""
    x = as_tensor(x)
    out = x.data.repeat(factor, axis=-2).repeat(factor, axis=-1)
    shape = x.shape

    def backward(g):
        g = g.reshape(*shape[:-2], shape[-2], factor, shape[-1], factor)
        return (g.sum(axis=(-3, -1)),)

    return Tensor._make(out, (x,), backward)


def avg_pool(x, factor):
    """Non-overlapping mean pooling of the last two axes (sizes must divide)."""
    x = as_tensor(x)
    *lead, h, w = x.shape
    if h % factor or w % factor:
        raise DimensionError(f"avg_pool factor {factor} does not divide {h}x{w}")
    blocks = reshape(x, (*lead, h // factor, factor, w // factor, factor))
    return mean(blocks, axis=(-3, -1))


def window_min(x, size):
    """Minimum over a ``size``x``size`` neighbourhood of the last two axes.

    Borders are edge-replicated so the output keeps the input's shape; the
    gradient flows to the first minimizing pixel of each window.
    """
    x = as_tensor(x)
    if size % 2 == 0:
        raise ContractError(f"window size must be odd, got {size}")
    if size == 1:
        return x
    r = size // 2
    *lead, h, w = x.shape
    xd = x.data.reshape(-1, h, w)
    padded = np.pad(xd, ((0, 0), (r, r), (r, r)), mode="edge")
    win = sliding_window_view(padded, (size, size), axis=(1, 2)).reshape(xd.shape[0], h, w, -1)
    am = np.argmin(win, axis=-1)
    out = np.take_along_axis(win, am[..., None], axis=-1)[..., 0]
    src_h = np.clip(np.arange(h)[:, None] + am // size - r, 0, h - 1)
    src_w = np.clip(np.arange(w)[None, :] + am % size - r, 0, w - 1)
    flat_src = (np.arange(xd.shape[0])[:, None, None] * h + src_h) * w + src_w

    def backward(g):
        full = np.bincount(flat_src.ravel(), weights=g.ravel(), minlength=xd.size)
        return (full.reshape(x.shape).astype(x.data.dtype, copy=False),)

    return Tensor._make(out.reshape(x.shape), (x,), backward)


# reduction names that read naturally as ``T.sum`` etc.
sum = tsum  # noqa: A001
max = tmax  # noqa: A001
min = tmin  # noqa: A001
abs = tabs  # noqa: A001


# -- gradient checking --------------------------------------------------------------

def grad_check(f, x, eps=1e-4, floor=1e-6):
    """Largest relative error between the backward gradient and central differences.

    ``f`` maps a Tensor to a scalar Tensor. The relative error of a coordinate
    is ``|g - fd| / max(|g|, |fd|, floor)``; ``floor`` keeps coordinates with
    vanishing gradient from dividing by rounding noise.
    """
    base = np.array(as_tensor(x).data, dtype=np.float64)
    with precision("float64"):
        leaf = Tensor(base.copy(), requires_grad=True)
        f(leaf).backward()
        analytic = np.zeros_like(base) if leaf.grad is None else np.asarray(leaf.grad, dtype=np.float64)
        numeric = np.zeros_like(base)
        with no_grad():
            for i in range(base.size):
                probe = base.copy()
                probe.flat[i] += eps
                fp = float(f(Tensor(probe)).data)
                probe.flat[i] -= 2 * eps
                fm = float(f(Tensor(probe)).data)
                numeric.flat[i] = (fp - fm) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if base.size else 0.0
