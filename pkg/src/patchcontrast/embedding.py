"""Patch sampling and the two-layer projection head.

A feature map is an H x W x C grid. K spatial locations are drawn without
replacement and the C-vectors at those locations are pushed through a small
MLP (affine, relu, affine) followed by row-wise L2 normalization, producing
one unit-norm embedding per patch. The same index set must be applied to
the input-side and output-side maps so that row k of both embedding
matrices refers to the same spatial location; that correspondence is what
makes (z_k, w_k) a positive pair downstream.

The backward pass is analytic. ``head_backward`` is the exact vector-
Jacobian product through normalization, both affine layers and the
rectifier (subgradient 0 at 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import l2_normalize_rows_vjp

__all__ = [
    "EmbeddingSet",
    "FeatureMap",
    "ForwardCache",
    "HeadGrads",
    "ProjectionHead",
    "gather_patches",
    "head_backward",
    "head_forward",
    "init_head",
    "sample_patch_indices",
]


@dataclass
class FeatureMap:
    """Spatial feature grid with values indexed [h][w][c]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"feature map must be H x W x C, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    def flat(self) -> np.ndarray:
        """(H*W) x C view, row-major over spatial locations."""
        h, w, c = self.values.shape
        return self.values.reshape(h * w, c)


@dataclass
class EmbeddingSet:
    """K x D embedding rows tagged with the side they came from."""

    vectors: np.ndarray
    side: str  # "input" (z) or "output" (w)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("embedding set must be K x D")
        if self.side not in ("input", "output"):
            raise ValueError(f"side must be 'input' or 'output', got {self.side!r}")

    def check_unit_norm(self, tol: float = 1e-9) -> None:
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > tol):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"row {worst} has norm {norms[worst]!r}, expected 1")


def as_embedding_matrix(e) -> np.ndarray:
    """Accept an EmbeddingSet or a bare K x D array."""
    if isinstance(e, EmbeddingSet):
        return e.vectors
    a = np.asarray(e, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"embeddings must be K x D, got shape {a.shape}")
    return a


def sample_patch_indices(rng: np.random.Generator, height: int, width: int,
                         k: int) -> np.ndarray:
    """Draw k distinct flat spatial indices, uniform without replacement."""
    total = height * width
    if k > total:
        raise ValueError(f"cannot sample {k} patches from a {height}x{width} grid")
    if k < 1:
        raise ValueError("need at least one patch")
    return rng.choice(total, size=k, replace=False)


def gather_patches(fm: FeatureMap, indices: np.ndarray) -> np.ndarray:
    """Row r of the result is the feature vector at flat location indices[r]."""
    idx = np.asarray(indices)
    total = fm.height * fm.width
    if idx.size and (idx.min() < 0 or idx.max() >= total):
        raise ValueError(f"patch index out of range for a {fm.height}x{fm.width} grid")
    return fm.flat()[idx]


@dataclass
class ProjectionHead:
    """affine -> relu -> affine -> (optional) row normalization.

    w1: C x D, w2: D x D. ``normalize`` is on by default; turning it off
    exposes raw pre-norm embeddings for experiments.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    normalize: bool = True

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(self.w1.copy(), self.b1.copy(),
                              self.w2.copy(), self.b2.copy(), self.normalize)


def init_head(rng: np.random.Generator, in_dim: int, embed_dim: int,
              normalize: bool = True) -> ProjectionHead:
    """He-scaled gaussian weights, zero biases."""
    w1 = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, embed_dim))
    w2 = rng.normal(0.0, np.sqrt(2.0 / embed_dim), size=(embed_dim, embed_dim))
    return ProjectionHead(w1, np.zeros(embed_dim), w2, np.zeros(embed_dim), normalize)


@dataclass
class HeadGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ForwardCache:
    head: ProjectionHead
    x: np.ndarray        # K x C input patches
    h1_pre: np.ndarray   # K x D pre-activation of layer 1
    h1: np.ndarray       # K x D rectified
    y: np.ndarray        # K x D pre-normalization output
    norms: np.ndarray = field(default=None)  # K row norms (None if not normalizing)
    e: np.ndarray = field(default=None)      # K x D final output


def head_forward(head: ProjectionHead, patches: np.ndarray):
    """Returns (embeddings, cache); embeddings are K x D, unit rows if normalizing."""
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.in_dim:
        raise ValueError(
            f"patches must be K x {head.in_dim}, got {x.shape}")
    h1_pre = x @ head.w1 + head.b1
    h1 = np.maximum(h1_pre, 0.0)
    y = h1 @ head.w2 + head.b2
    if head.normalize:
        norms = np.linalg.norm(y, axis=1)
        if np.any(norms <= 1e-12):
            bad = int(np.nonzero(norms <= 1e-12)[0][0])
            raise ValueError(f"cannot normalize zero-norm embedding row {bad}")
        e = y / norms[:, None]
    else:
        norms = None
        e = y
    cache = ForwardCache(head=head, x=x, h1_pre=h1_pre, h1=h1, y=y, norms=norms, e=e)
    return e, cache


def head_backward(cache: ForwardCache, grad_out: np.ndarray):
    """Exact VJP; returns (HeadGrads, grad_input).

    ``grad_out`` is the cotangent w.r.t. the forward output (post-norm when
    the head normalizes). Rectifier subgradient at exactly 0 is 0.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.y.shape:
        raise ValueError(f"grad_out shape {g.shape} != forward output {cache.y.shape}")
    head = cache.head
    if head.normalize:
        g_y = l2_normalize_rows_vjp(cache.e, cache.norms, g)
    else:
        g_y = g
    g_w2 = cache.h1.T @ g_y
    g_b2 = g_y.sum(axis=0)
    g_h1 = g_y @ head.w2.T
    g_h1_pre = np.where(cache.h1_pre > 0.0, g_h1, 0.0)
    g_w1 = cache.x.T @ g_h1_pre
    g_b1 = g_h1_pre.sum(axis=0)
    g_x = g_h1_pre @ head.w1.T
    return HeadGrads(g_w1, g_b1, g_w2, g_b2), g_x
