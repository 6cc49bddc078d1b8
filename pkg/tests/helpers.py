"""Shared test oracles: central finite differences over tape-free forwards."""

import numpy as np

from echopoint import tensor as ep


def numeric_grad(fn, arrays, step=1e-5):
    """Central-difference gradient of a scalar fn w.r.t. each input array.

    fn receives plain numpy arrays and must return a python float. Every
    evaluation runs outside the tape so the oracle is independent of the
    backprop path it is checking.
    """
    grads = []
    for k, base in enumerate(arrays):
        base = np.asarray(base, dtype=np.float64)
        g = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = fn(*[a if j != k else base for j, a in enumerate(arrays)])
            flat[i] = orig - step
            lo = fn(*[a if j != k else base for j, a in enumerate(arrays)])
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def rel_error(analytic, numeric):
    """Max relative error with an absolute floor for near-zero entries."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build_scalar, arrays, step=1e-5, tol=1e-4):
    """Compare tape gradients of build_scalar(*Tensors) against the FD oracle.

    build_scalar maps Tensors to a scalar Tensor. Returns the worst
    relative error across all inputs. Runs in float64.
    """
    with ep.using_dtype(np.float64):
        tensors = [ep.tensor(a, requires_grad=True) for a in arrays]
        out = build_scalar(*tensors)
        out.backward()
        analytic = [t.grad.copy() for t in tensors]

        def forward(*arr):
            with ep.no_grad():
                val = build_scalar(*[ep.tensor(a) for a in arr])
            return float(val.item())

        numeric = numeric_grad(forward, [np.asarray(a, dtype=np.float64) for a in arrays], step)
    worst = max(rel_error(a, n) for a, n in zip(analytic, numeric))
    assert worst < tol, f"gradient mismatch: rel error {worst:.3e} >= {tol}"
    return worst
