"""Patch-wise similarity distributions and the relation-consistency loss.

For embeddings z_1..z_K, row k of the similarity distribution is the
softmax over j of z_k.z_j / tau_rel, i.e. a categorical "soft label" over
the other patches describing how related patch k is to each of them. The
same construction on the output side gives Q from w. The consistency loss
sums the Jensen-Shannon divergence JSD(P_k || Q_k) over all K rows, so it
is bounded by K*ln(2), symmetric in (z, w), and zero exactly when the two
relation structures agree.

Gradients are analytic and taken w.r.t. the embedding rows as given (the
chain through any upstream normalization belongs to the head's backward).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import as_embedding_matrix
from .numerics import softmax

__all__ = [
    "RelationConfig",
    "SimilarityDistribution",
    "SrcResult",
    "jsd",
    "similarity_distribution",
    "src_loss",
]


@dataclass
class RelationConfig:
    include_self: bool = True    # keep the j == k term in each row's softmax
    tau_rel: float = 1.0
    detach_side: str | None = None  # None, "z" or "w": drop gradients to one side

    def __post_init__(self):
        if self.tau_rel <= 0:
            raise ValueError(f"tau_rel must be positive, got {self.tau_rel}")
        if self.detach_side not in (None, "z", "w"):
            raise ValueError(f"detach_side must be None, 'z' or 'w', got {self.detach_side!r}")


@dataclass
class SimilarityDistribution:
    """Row k is P_k over the K (or K-1, self excluded) patches."""

    probs: np.ndarray
    include_self: bool
    tau_rel: float


def _masked_relation_probs(e: np.ndarray, include_self: bool, tau_rel: float) -> np.ndarray:
    """K x K row-softmax of e.e^T / tau_rel; excluded diagonal gets prob 0."""
    scores = (e @ e.T) / tau_rel
    if not include_self:
        np.fill_diagonal(scores, -np.inf)
    return softmax(scores, axis=1)


def _check_relation_k(k: int, include_self: bool) -> None:
    if include_self and k < 2:
        raise ValueError(f"need K >= 2 patches, got {k}")
    if not include_self and k < 3:
        raise ValueError(f"need K >= 3 patches when excluding self, got {k}")


def similarity_distribution(e, include_self: bool = True,
                            tau_rel: float = 1.0) -> SimilarityDistribution:
    """Per-patch relation distribution; rows sum to 1.

    With include_self=False the K x (K-1) rows omit each patch's own entry.
    """
    if tau_rel <= 0:
        raise ValueError(f"tau_rel must be positive, got {tau_rel}")
    mat = as_embedding_matrix(e)
    k = mat.shape[0]
    _check_relation_k(k, include_self)
    full = _masked_relation_probs(mat, include_self, tau_rel)
    if include_self:
        probs = full
    else:
        off = ~np.eye(k, dtype=bool)
        probs = full[off].reshape(k, k - 1)
    return SimilarityDistribution(probs=probs, include_self=include_self, tau_rel=tau_rel)


def jsd(p, q) -> float:
    """Jensen-Shannon divergence, natural log, 0*log(0) := 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} does not sum to 1 (sum={v.sum()!r})")
    m = 0.5 * (p + q)
    return float(_kl_terms(p, m).sum() / 2 + _kl_terms(q, m).sum() / 2)


def _kl_terms(p: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Elementwise p*log(p/m) with zero-probability entries contributing 0."""
    safe_p = np.where(p > 0, p, 1.0)
    safe_m = np.where(m > 0, m, 1.0)
    return np.where(p > 0, p * (np.log(safe_p) - np.log(safe_m)), 0.0)


@dataclass
class SrcResult:
    loss: float
    grad_z: np.ndarray
    grad_w: np.ndarray


def src_loss(z, w, cfg: RelationConfig | None = None) -> SrcResult:
    """Sum over k of JSD(P_k || Q_k), with analytic gradients.

    P comes from z, Q from w; both sides receive gradients unless
    cfg.detach_side names one. Loss lies in [0, K*ln 2].
    """
    cfg = cfg or RelationConfig()
    zm = as_embedding_matrix(z)
    wm = as_embedding_matrix(w)
    if zm.shape[0] != wm.shape[0]:
        raise ValueError(f"K mismatch: z has {zm.shape[0]} rows, w has {wm.shape[0]}")
    _check_relation_k(zm.shape[0], cfg.include_self)

    p = _masked_relation_probs(zm, cfg.include_self, cfg.tau_rel)
    q = _masked_relation_probs(wm, cfg.include_self, cfg.tau_rel)
    m = 0.5 * (p + q)
    loss = float(_kl_terms(p, m).sum() / 2 + _kl_terms(q, m).sum() / 2)

    grad_z = _relation_grad(zm, p, m, cfg.tau_rel)
    grad_w = _relation_grad(wm, q, m, cfg.tau_rel)
    if cfg.detach_side == "z":
        grad_z = np.zeros_like(grad_z)
    elif cfg.detach_side == "w":
        grad_w = np.zeros_like(grad_w)
    return SrcResult(loss=loss, grad_z=grad_z, grad_w=grad_w)


def _relation_grad(e: np.ndarray, p: np.ndarray, m: np.ndarray,
                   tau_rel: float) -> np.ndarray:
    """Gradient of the summed JSD w.r.t. the embeddings behind p.

    d JSD / d p_ij = log(p_ij / m_ij) / 2 (the mixture terms cancel), then
    back through the row softmax and the symmetric score matrix e.e^T.
    """
    safe_p = np.where(p > 0, p, 1.0)
    safe_m = np.where(m > 0, m, 1.0)
    g_p = np.where(p > 0, 0.5 * (np.log(safe_p) - np.log(safe_m)), 0.0)
    # row-wise softmax VJP: g_t = p * (g_p - <g_p, p>)
    inner = np.sum(g_p * p, axis=1, keepdims=True)
    g_scores = p * (g_p - inner) / tau_rel
    return (g_scores + g_scores.T) @ e
