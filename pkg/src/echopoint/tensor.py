"""Dense-tensor numeric core with reverse-mode automatic differentiation.

Tensors wrap contiguous numpy arrays and, when gradient recording is
enabled, participate in a single-threaded backprop tape built from
per-op closures. Compute dtype is float32 by default and can be switched
to float64 globally for gradient-check work via `using_dtype`.

Broadcasting is deliberately narrow: a lower-rank (or size-1) operand may
broadcast across leading batch dims only. Anything fancier raises.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf as _erf

__all__ = [
    "Tensor", "tensor", "zeros", "ones", "randn",
    "set_default_dtype", "default_dtype", "using_dtype", "no_grad",
    "add", "sub", "mul", "scale", "neg", "matmul", "linear",
    "transpose", "reshape", "concat", "slice_axis", "gather", "gather_rows",
    "reduce_sum", "reduce_mean", "softmax", "layernorm", "gelu", "sigmoid",
    "bce_with_logits", "mse", "dropout",
    "DimensionError",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

_default_dtype = np.float32
_grad_enabled = True


class DimensionError(ValueError):
    """Raised when operand shapes do not satisfy an op's contract."""


def set_default_dtype(dtype) -> None:
    """Set the global compute dtype ('float32' or 'float64')."""
    global _default_dtype
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _default_dtype = dt.type


def default_dtype():
    return _default_dtype


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the global compute dtype (gradient-check mode)."""
    global _default_dtype
    prev = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _default_dtype = prev


@contextmanager
def no_grad():
    """Disable tape recording; forward values are unaffected."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float array with an optional backprop record.

    Data is immutable by convention after creation; only `.grad` is
    mutated (by `backward`). Leaf tensors created with
    `requires_grad=True` receive accumulated gradients of their own
    shape after `backward()` on a downstream scalar.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.ascontiguousarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    # -- introspection -------------------------------------------------
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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- autodiff ------------------------------------------------------
    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, grad=None) -> None:
        """Reverse-mode sweep from this tensor (scalar unless grad given)."""
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() without explicit grad requires a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


# -- construction -------------------------------------------------------

def tensor(data, requires_grad=False) -> Tensor:
    """Make a Tensor in the current default dtype."""
    return Tensor(np.asarray(data, dtype=_default_dtype), requires_grad=requires_grad)


def zeros(shape, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_default_dtype), requires_grad=requires_grad)


def ones(shape, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape, dtype=_default_dtype), requires_grad=requires_grad)


def randn(rng: np.random.Generator, shape, std=1.0, requires_grad=False) -> Tensor:
    return Tensor((rng.standard_normal(shape) * std).astype(_default_dtype),
                  requires_grad=requires_grad)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return tensor(x)


def _make(out_data, parents, backward) -> Tensor:
    """Build an op output; records the tape node only when needed."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(out_data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(out_data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back onto a (leading-dim) broadcast operand shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_leading_broadcast(a_shape, b_shape, op: str) -> None:
    """Permit broadcasting only of leading batch dims / size-1 dims."""
    for da, db in zip(reversed(a_shape), reversed(b_shape)):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{op}: shapes {a_shape} and {b_shape} are not compatible")


# -- elementwise --------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_leading_broadcast(a.shape, b.shape, "add")
    out = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_leading_broadcast(a.shape, b.shape, "sub")
    out = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_leading_broadcast(a.shape, b.shape, "mul")
    out = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out, (a, b), backward)


def neg(a) -> Tensor:
    a = _coerce(a)
    return scale(a, -1.0)


def scale(a, s: float) -> Tensor:
    a = _coerce(a)
    s = float(s)
    out = a.data * a.data.dtype.type(s)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * a.data.dtype.type(s))

    return _make(out, (a,), backward)


# -- linear algebra -----------------------------------------------------

def _swap_last(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    """Batched matrix product; leading batch dims broadcast."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    _check_leading_broadcast(a.shape[:-2], b.shape[:-2], "matmul")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ _swap_last(b.data), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(_swap_last(a.data) @ g, b.shape))

    return _make(out, (a, b), backward)


def linear(x, w, b) -> Tensor:
    """Affine map x @ w + b with w: (in, out), b: (out,)."""
    return add(matmul(x, w), b)


def transpose(a, axes=None) -> Tensor:
    """Permute axes; default swaps the last two."""
    a = _coerce(a)
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(np.transpose(a.data, axes))

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.transpose(g, inv))

    return _make(out, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    in_shape = a.shape
    out = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(in_shape))

    return _make(out, (a,), backward)


def concat(parts, axis=0) -> Tensor:
    parts = [_coerce(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p._accumulate(g[tuple(idx)])

    return _make(out, tuple(parts), backward)


def slice_axis(a, axis, start, stop) -> Tensor:
    a = _coerce(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = np.ascontiguousarray(a.data[idx])

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx] = g
            a._accumulate(full)

    return _make(out, (a,), backward)


def gather(a, index, axis=0) -> Tensor:
    """Select rows along an axis by a 1-D integer index array."""
    a = _coerce(a)
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise DimensionError("gather index must be 1-D; use gather_rows for batched selection")
    out = np.take(a.data, index, axis=axis)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(np.moveaxis(full, axis, 0), index, np.moveaxis(g, axis, 0))
            a._accumulate(full)

    return _make(out, (a,), backward)


def gather_rows(a, index) -> Tensor:
    """Batched row selection: a (B, N, D), index (B, M) -> (B, M, D)."""
    a = _coerce(a)
    index = np.asarray(index, dtype=np.int64)
    if a.ndim != 3 or index.ndim != 2 or index.shape[0] != a.shape[0]:
        raise DimensionError(f"gather_rows: got data {a.shape}, index {index.shape}")
    out = np.take_along_axis(a.data, index[:, :, None], axis=1)
    bidx = np.repeat(np.arange(a.shape[0]), index.shape[1])

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (bidx, index.reshape(-1)), g.reshape(-1, a.shape[2]))
            a._accumulate(full)

    return _make(out, (a,), backward)


# -- reductions ----------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    axis = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _make(out, (a,), backward)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    naxis = _norm_axis(axis, a.ndim)
    count = a.size if naxis is None else int(np.prod([a.shape[ax] for ax in naxis]))
    return scale(reduce_sum(a, axis, keepdims), 1.0 / count)


# -- nonlinearities -------------------------------------------------------

def softmax(a, axis=-1) -> Tensor:
    """Row-max-stabilized softmax along an axis."""
    a = _coerce(a)
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=axis, keepdims=True)

    def backward(g):
        if a.requires_grad:
            dot = (g * out).sum(axis=axis, keepdims=True)
            a._accumulate(out * (g - dot))

    return _make(out, (a,), backward)


def layernorm(a, gain, bias, eps=1e-5) -> Tensor:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    a, gain, bias = _coerce(a), _coerce(gain), _coerce(bias)
    x = a.data
    mean = x.mean(axis=-1, keepdims=True)
    xc = x - mean
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain._accumulate(_unbroadcast(g * xhat, gain.shape))
        if bias.requires_grad:
            bias._accumulate(_unbroadcast(g, bias.shape))
        if a.requires_grad:
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            a._accumulate(inv * (dxhat - m1 - xhat * m2))

    return _make(out, (a, gain, bias), backward)


def gelu(a) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    a = _coerce(a)
    x = a.data
    cdf = 0.5 * (1.0 + _erf(x * x.dtype.type(_INV_SQRT2)))
    out = x * cdf

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * x * x) * x.dtype.type(_INV_SQRT2PI)
            a._accumulate(g * (cdf + x * pdf))

    return _make(out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), backward)


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy on raw logits (overflow-safe)."""
    logits, targets = _coerce(logits), _coerce(targets)
    if logits.shape != targets.shape:
        raise DimensionError(f"bce_with_logits: {logits.shape} vs {targets.shape}")
    z, y = logits.data, targets.data
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = per.mean()
    n = z.size

    def backward(g):
        if logits.requires_grad:
            s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                         np.exp(np.minimum(z, 0)) / (1.0 + np.exp(np.minimum(z, 0))))
            logits._accumulate((g * (s - y) / n).astype(z.dtype))
        if targets.requires_grad:
            targets._accumulate((g * (-z) / n).astype(z.dtype))

    return _make(np.asarray(out, dtype=z.dtype), (logits, targets), backward)


def mse(a, b) -> Tensor:
    """Mean squared error over all elements."""
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise DimensionError(f"mse: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    out = np.asarray((diff * diff).mean(), dtype=a.data.dtype)
    n = diff.size

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * 2.0 * diff / n)
        if b.requires_grad:
            b._accumulate(g * (-2.0) * diff / n)

    return _make(out, (a, b), backward)


def dropout(a, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when rate is 0 or no rng is supplied."""
    a = _coerce(a)
    if rate <= 0.0 or rng is None:
        return a
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(a.shape) >= rate).astype(a.data.dtype) / a.data.dtype.type(1.0 - rate)
    out = a.data * keep

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * keep)

    return _make(out, (a,), backward)
