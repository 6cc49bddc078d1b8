"""Parameter containers: a minimal module system over the tensor core."""

from __future__ import annotations

import numpy as np

from . import tensor as ep
from .tensor import Tensor

__all__ = ["Module", "Linear", "LayerNorm", "trunc_normal", "param"]


def trunc_normal(rng: np.random.Generator, shape, std=0.02) -> np.ndarray:
    """Normal(0, std) resampled until within +-2 std (ViT-style init)."""
    out = rng.standard_normal(shape) * std
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum())) * std
        bad = np.abs(out) > 2 * std
    return out


def param(values) -> Tensor:
    """Wrap an array as a trainable leaf in the current compute dtype."""
    return ep.tensor(values, requires_grad=True)


class Module:
    """Base with recursive, insertion-ordered parameter discovery.

    Parameters get dotted names from the attribute path, e.g.
    "blocks.3.attn.qkv.w". Lists/tuples of Modules are indexed.
    """

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        self._collect("", out)
        return out

    def _collect(self, prefix: str, out: dict) -> None:
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    out[key] = value
            elif isinstance(value, Module):
                value._collect(key + ".", out)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        item._collect(f"{key}.{i}.", out)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        """Copy arrays into the module's parameters by name (strict)."""
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ep.DimensionError(f"param {name}: checkpoint {arr.shape} vs model {p.shape}")
            p.data = np.ascontiguousarray(arr.astype(p.data.dtype))

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, std=0.02):
        self.w = param(trunc_normal(rng, (in_dim, out_dim), std))
        self.b = param(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ep.linear(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = param(np.ones(dim))
        self.bias = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ep.layernorm(x, self.gain, self.bias, self.eps)
