"""InfoNCE, decoupled InfoNCE (DCE) and their hard-negative variants.

Batch convention: for positive pair k, the query is w_k, the positive is
z_k, and the negatives are the other input-side rows {z_j : j != k}. With
scores s_jk = z_j.w_k / tau,

    infonce_k = -s_kk + logsumexp_j    s_jk         (positive in denominator)
    dce_k     = -s_kk + logsumexp_j!=k s_jk         (positive removed)

The hard-negative losses replace the plain negative sum with a
self-normalized importance estimate under weights u_jk = exp(gamma *
z_k.z_j), concentrating mass on negatives close to the positive's input
embedding:

    E_k    = sum_j!=k u_jk exp(s_jk) / sum_j!=k u_jk
    hdce_k = -s_kk + log((K-1) * E_k)

Everything runs in log space. log((K-1) * E_k) is arranged as
logsumexp_j!=k(gamma z_k.z_j + s_jk) plus the additive correction
log(K-1) - logsumexp_j!=k(gamma z_k.z_j); at gamma = 0 the correction is
exactly +0.0 and the weighted logits equal the plain scores bitwise, so
hdce reduces to dce (and hinfonce to infonce) bit-for-bit, gradients
included.

Losses are means over k; gradients are analytic and include the dependence
of the importance weights on z (switch off with detach_weights). The npc
field of the InfoNCE result is the exact negative-positive coupling
coefficient 1 - p_positive, the factor by which the InfoNCE gradient of
w_k is scaled relative to DCE's. ``npc_paper_approx`` is the input-side
approximation of it that substitutes z_j.z_k for z_j.w_k in the negative
sum, reported for side-by-side diagnostics; the two coincide when w == z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import as_embedding_matrix

__all__ = [
    "ContrastConfig",
    "ContrastResult",
    "dce",
    "hdce",
    "hinfonce",
    "infonce",
    "npc_paper_approx",
]


@dataclass
class ContrastConfig:
    tau: float = 0.07
    gamma: float = 0.0
    detach_weights: bool = False  # stop gradients through the vMF weights

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")


@dataclass
class ContrastResult:
    loss: float
    grad_z: np.ndarray
    grad_w: np.ndarray
    per_positive: np.ndarray
    npc: np.ndarray | None = None  # exact coupling coefficients (InfoNCE family)


def _prepare(z, w, cfg: ContrastConfig):
    zm = as_embedding_matrix(z)
    wm = as_embedding_matrix(w)
    if zm.shape != wm.shape:
        raise ValueError(f"shape mismatch: z {zm.shape} vs w {wm.shape}")
    k = zm.shape[0]
    if k < 2:
        raise ValueError(f"need K >= 2 for contrastive losses, got {k}")
    scores = (zm @ wm.T) / cfg.tau  # scores[j, k] = z_j . w_k / tau
    return zm, wm, k, scores


def _col_logsumexp(a: np.ndarray) -> np.ndarray:
    m = np.max(a, axis=0)
    return m + np.log(np.sum(np.exp(a - m), axis=0))


def _col_softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - np.max(a, axis=0))
    return e / e.sum(axis=0)


def _masked(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    np.fill_diagonal(out, -np.inf)
    return out


def infonce(z, w, cfg: ContrastConfig) -> ContrastResult:
    zm, wm, k, s = _prepare(z, w, cfg)
    p = _col_softmax(s)
    per_pos = -np.diag(s) + _col_logsumexp(s)
    coeff = p - np.eye(k)
    grad_w = coeff.T @ zm / (cfg.tau * k)
    grad_z = coeff @ wm / (cfg.tau * k)
    npc = 1.0 - np.diag(p)
    return ContrastResult(float(per_pos.mean()), grad_z, grad_w, per_pos, npc)


def dce(z, w, cfg: ContrastConfig) -> ContrastResult:
    zm, wm, k, s = _prepare(z, w, cfg)
    sm = _masked(s)
    p = _col_softmax(sm)  # zero diagonal
    per_pos = -np.diag(s) + _col_logsumexp(sm)
    coeff = p - np.eye(k)
    grad_w = coeff.T @ zm / (cfg.tau * k)
    grad_z = coeff @ wm / (cfg.tau * k)
    return ContrastResult(float(per_pos.mean()), grad_z, grad_w, per_pos)


class _HardNegativeParts:
    """Log-space pieces of the importance-weighted negative term."""

    def __init__(self, zm: np.ndarray, k: int, s: np.ndarray, cfg: ContrastConfig):
        rel = zm @ zm.T
        self.weighted = _masked(cfg.gamma * rel + s)
        self.weight_only = _masked(cfg.gamma * rel)
        self.a = _col_softmax(self.weighted)
        self.lse_weighted = _col_logsumexp(self.weighted)
        # exactly +0.0 at gamma = 0, making the reduction to dce/infonce bitwise
        self.correction = np.log(k - 1.0) - _col_logsumexp(self.weight_only)

    def neg_log(self) -> np.ndarray:
        """log((K-1) * E_k) per column."""
        return self.lse_weighted + self.correction

    def weight_grad(self, scale: np.ndarray | float, zm: np.ndarray,
                    gamma: float, k: int) -> np.ndarray:
        """Gradient of the scaled negative term through the vMF weights."""
        b = _col_softmax(self.weight_only)
        d = gamma * scale * (self.a - b)
        return (d + d.T) @ zm / k


def hdce(z, w, cfg: ContrastConfig) -> ContrastResult:
    zm, wm, k, s = _prepare(z, w, cfg)
    parts = _HardNegativeParts(zm, k, s, cfg)
    per_pos = (-np.diag(s) + parts.lse_weighted) + parts.correction
    coeff = parts.a - np.eye(k)
    grad_w = coeff.T @ zm / (cfg.tau * k)
    grad_z = coeff @ wm / (cfg.tau * k)
    if not cfg.detach_weights:
        grad_z = grad_z + parts.weight_grad(1.0, zm, cfg.gamma, k)
    return ContrastResult(float(per_pos.mean()), grad_z, grad_w, per_pos)


def hinfonce(z, w, cfg: ContrastConfig) -> ContrastResult:
    """InfoNCE with the importance-weighted negative sum (positive term kept)."""
    zm, wm, k, s = _prepare(z, w, cfg)
    parts = _HardNegativeParts(zm, k, s, cfg)
    pos = np.diag(s).copy()
    total = _col_logsumexp(np.stack([pos, parts.neg_log()]))
    per_pos = -pos + total
    beta = np.exp(pos - total)             # probability mass of the positive
    coeff = (1.0 - beta) * parts.a         # off-diagonal rows (a has zero diagonal)
    coeff = coeff - np.diag(1.0 - beta)    # d per_pos / d s_kk = beta - 1
    grad_w = coeff.T @ zm / (cfg.tau * k)
    grad_z = coeff @ wm / (cfg.tau * k)
    if not cfg.detach_weights:
        grad_z = grad_z + parts.weight_grad(1.0 - beta, zm, cfg.gamma, k)
    return ContrastResult(float(per_pos.mean()), grad_z, grad_w, per_pos, 1.0 - beta)


def npc_paper_approx(z, w, cfg: ContrastConfig) -> np.ndarray:
    """Input-side approximation of the coupling coefficient.

    1 - exp(s_kk) / (exp(s_kk) + sum_{j!=k} exp(z_j.z_k / tau)); exact when
    w == z.
    """
    zm, wm, k, s = _prepare(z, w, cfg)
    pos = np.diag(s).copy()
    rel = _masked((zm @ zm.T) / cfg.tau)
    total = _col_logsumexp(np.stack([pos, _col_logsumexp(rel)]))
    return 1.0 - np.exp(pos - total)
