"""Synthetic paired feature maps with known cluster structure.

Each spatial cell belongs to one of G clusters; a cluster owns a unit-norm
prototype vector in C dimensions. The input map carries the prototypes
plus gaussian noise, the output map carries the same prototypes pushed
through a fixed random orthogonal matrix (plus independent noise), so the
two maps are different "views" whose ground-truth correspondence is the
cluster labeling. Patches are semantically related exactly when their
labels match, which gives the harness an oracle for retrieval and
consistency metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import FeatureMap
from .numerics import make_rng

__all__ = [
    "SyntheticTaskSpec",
    "block_labels",
    "generate_pair",
    "random_orthogonal",
    "voronoi_labels",
]


@dataclass
class SyntheticTaskSpec:
    height: int = 16
    width: int = 16
    channels: int = 32
    clusters: int = 8
    noise_sigma: float = 0.3
    rotation_seed: int = 7
    layout: str = "blocks"  # or "voronoi"

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("grid dimensions must be positive")
        if self.channels < 2:
            raise ValueError("need at least 2 channels")
        if not 1 <= self.clusters <= self.height * self.width:
            raise ValueError(
                f"clusters must be in [1, {self.height * self.width}], got {self.clusters}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.layout not in ("blocks", "voronoi"):
            raise ValueError(f"layout must be 'blocks' or 'voronoi', got {self.layout!r}")


def random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-ish orthogonal matrix: QR of a gaussian, sign-fixed for uniqueness."""
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def block_labels(height: int, width: int, clusters: int) -> np.ndarray:
    """Deterministic tiling into `clusters` rectangular regions.

    Uses the divisor pair of `clusters` closest to square that fits the
    grid; when none fits (e.g. prime counts on skinny grids), falls back to
    equal contiguous runs in row-major order. Exactly `clusters` distinct
    labels either way.
    """
    best = None
    for a in range(1, clusters + 1):
        if clusters % a == 0:
            b = clusters // a
            if a <= height and b <= width:
                if best is None or abs(a - b) < abs(best[0] - best[1]):
                    best = (a, b)
    if best is not None:
        a, b = best
        rows = (np.arange(height) * a) // height
        cols = (np.arange(width) * b) // width
        return (rows[:, None] * b + cols[None, :]).reshape(-1)
    flat = np.arange(height * width)
    return (flat * clusters) // (height * width)


def voronoi_labels(rng: np.random.Generator, height: int, width: int,
                   clusters: int) -> np.ndarray:
    """Each cell takes the label of its nearest seed cell (ties to lower id)."""
    seeds = rng.choice(height * width, size=clusters, replace=False)
    sh, sw = np.divmod(seeds, width)
    hh, ww = np.divmod(np.arange(height * width), width)
    d2 = (hh[:, None] - sh[None, :]) ** 2 + (ww[:, None] - sw[None, :]) ** 2
    return np.argmin(d2, axis=1)


def generate_pair(rng: np.random.Generator, spec: SyntheticTaskSpec):
    """Returns (input FeatureMap, output FeatureMap, labels of length H*W).

    Locations share semantics iff their labels are equal. The orthogonal
    map applied on the output side is fixed by spec.rotation_seed, not by
    ``rng``, so re-rolling noise keeps the same cross-domain geometry.
    """
    h, w, c, g = spec.height, spec.width, spec.channels, spec.clusters
    protos = rng.normal(size=(g, c))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    if spec.layout == "blocks":
        labels = block_labels(h, w, g)
    else:
        labels = voronoi_labels(rng, h, w, g)
    rot = random_orthogonal(make_rng(spec.rotation_seed), c)
    base_in = protos[labels]
    base_out = base_in @ rot.T
    vals_in = base_in + spec.noise_sigma * rng.normal(size=(h * w, c))
    vals_out = base_out + spec.noise_sigma * rng.normal(size=(h * w, c))
    return (FeatureMap(vals_in.reshape(h, w, c)),
            FeatureMap(vals_out.reshape(h, w, c)),
            labels)
