"""Dense numeric kernel shared by every other module.

Everything runs on 64-bit numpy arrays. The exp-sum primitives are the
max-shifted stable forms, so losses stay finite for any finite scores.
Randomness flows through numpy's PCG64 generator: one ``make_rng(seed)``
per experiment, with parallel work deriving independent child streams via
``derive_rng(seed, stream)`` instead of sharing a generator.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_matrix",
    "derive_rng",
    "dot",
    "l2_normalize_rows",
    "l2_normalize_rows_vjp",
    "logsumexp",
    "make_rng",
    "matmul",
    "softmax",
]


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Coerce user input to a 2-D float64 array, rejecting NaN/Inf."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic PCG64 generator; equal seeds give bit-identical streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derive_rng(seed: int, stream: int) -> np.random.Generator:
    """Child generator for (seed, stream); streams are mutually independent."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,)))
    )


def logsumexp(v, axis=None):
    """log(sum(exp(v))) computed as m + log(sum(exp(v - m))), m = max(v).

    Entries of -inf are allowed (they drop out of the sum); the reduction
    must contain at least one finite entry.
    """
    a = np.asarray(v, dtype=np.float64)
    if a.size == 0:
        raise ValueError("logsumexp of an empty vector")
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    if axis is None:
        return float(out)
    return np.squeeze(out, axis=axis)


def softmax(v, axis=-1):
    """Stable softmax along ``axis``; -inf entries get probability 0."""
    a = np.asarray(v, dtype=np.float64)
    if a.size == 0:
        raise ValueError("softmax of an empty vector")
    m = np.max(a, axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def dot(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"dot needs equal-length vectors, got {u.shape} and {v.shape}")
    return float(u @ v)


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a @ b


_NORM_FLOOR = 1e-12


def l2_normalize_rows(m) -> np.ndarray:
    """Scale each row to unit Euclidean norm; zero rows are an error."""
    a = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(a, axis=-1)
    bad = np.nonzero(norms <= _NORM_FLOOR)[0]
    if bad.size:
        raise ValueError(f"cannot normalize zero-norm row {int(bad[0])}")
    return a / norms[..., None]


def l2_normalize_rows_vjp(normalized: np.ndarray, norms: np.ndarray,
                          grad_out: np.ndarray) -> np.ndarray:
    """Exact VJP of row normalization.

    With e = y/|y|, the pullback of a cotangent g is (g - (g.e) e) / |y|.
    ``normalized`` is e, ``norms`` the per-row |y|.
    """
    inner = np.sum(grad_out * normalized, axis=-1, keepdims=True)
    return (grad_out - inner * normalized) / norms[..., None]
