"""Similarity maps for one query location.

Embeds every spatial location of both maps through the head and reports,
per location j, the dot product of the query's input embedding with (A)
the input embedding z_j and (B) the output embedding w_j. With unit-norm
embeddings the query cell of grid A is exactly 1. Grids are written as CSV
(exact values) and 8-bit PGM (min-max scaled) for eyeballing.
"""

from __future__ import annotations

import numpy as np

from .embedding import FeatureMap, ProjectionHead, head_forward
from .fileio import write_grid_csv, write_pgm

__all__ = ["export_simmap", "similarity_grids"]


def similarity_grids(fm_in: FeatureMap, fm_out: FeatureMap, head: ProjectionHead,
                     query: tuple[int, int], head_out: ProjectionHead | None = None):
    """Returns (grid_a, grid_b), each H x W.

    grid_a[j] = z_query . z_j within the input map, grid_b[j] = z_query . w_j
    across maps. ``head_out`` defaults to the shared head.
    """
    h, w = fm_in.height, fm_in.width
    qh, qw = query
    if not (0 <= qh < h and 0 <= qw < w):
        raise ValueError(f"query ({qh},{qw}) outside the {h}x{w} grid")
    if (fm_out.height, fm_out.width) != (h, w):
        raise ValueError("input and output maps must share spatial dimensions")
    z, _ = head_forward(head, fm_in.flat())
    wv, _ = head_forward(head_out or head, fm_out.flat())
    q = z[qh * w + qw]
    grid_a = (z @ q).reshape(h, w)
    grid_b = (wv @ q).reshape(h, w)
    return grid_a, grid_b


def export_simmap(fm_in: FeatureMap, fm_out: FeatureMap, head: ProjectionHead,
                  query: tuple[int, int], prefix: str,
                  head_out: ProjectionHead | None = None):
    """Write {prefix}_a.csv/.pgm and {prefix}_b.csv/.pgm; returns the grids."""
    grid_a, grid_b = similarity_grids(fm_in, fm_out, head, query, head_out)
    for tag, grid in (("a", grid_a), ("b", grid_b)):
        write_grid_csv(f"{prefix}_{tag}.csv", grid)
        write_pgm(f"{prefix}_{tag}.pgm", grid)
    return grid_a, grid_b
