"""Hardness curriculum and the composite relation + contrast objective.

The hardness parameter gamma ramps from gamma_min to gamma_max over the
first T steps (linear or half-cosine) and stays saturated afterwards, so
early training sees near-uniform negatives and later training sees
progressively harder ones. The composite loss is

    lambda_src * src_loss + lambda_hdce * hard-negative contrast loss

with gradients combined by the same weights. The contrastive term is the
hard-negative DCE by default; the InfoNCE variant exists for ablations.
A side InfoNCE evaluation supplies coupling diagnostics; it never feeds
gradients, so turning it off cannot change a training trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .contrast import ContrastConfig, dce, hdce, hinfonce, infonce
from .embedding import as_embedding_matrix
from .relation import RelationConfig, src_loss

__all__ = [
    "CurriculumSchedule",
    "SemanticDiagnostics",
    "SemanticLossConfig",
    "SemanticLossResult",
    "gamma_at",
    "semantic_loss",
]


@dataclass
class CurriculumSchedule:
    gamma_min: float = 0.0
    gamma_max: float = 2.0
    warmup_steps: int = 1000
    shape: str = "linear"  # or "cosine"

    def __post_init__(self):
        if self.gamma_min < 0 or self.gamma_max < self.gamma_min:
            raise ValueError(
                f"need 0 <= gamma_min <= gamma_max, got ({self.gamma_min}, {self.gamma_max})")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be nonnegative")
        if self.shape not in ("linear", "cosine"):
            raise ValueError(f"shape must be 'linear' or 'cosine', got {self.shape!r}")

    @staticmethod
    def constant(gamma: float) -> "CurriculumSchedule":
        return CurriculumSchedule(gamma_min=gamma, gamma_max=gamma, warmup_steps=0)


def gamma_at(schedule: CurriculumSchedule, step: int) -> float:
    """Hardness at a given step; nondecreasing, saturates at gamma_max.

    warmup_steps == 0 means saturated from step 0 onward.
    """
    if schedule.warmup_steps == 0 or step >= schedule.warmup_steps:
        return schedule.gamma_max
    frac = step / schedule.warmup_steps
    if schedule.shape == "cosine":
        frac = (1.0 - math.cos(math.pi * frac)) / 2.0
    return schedule.gamma_min + (schedule.gamma_max - schedule.gamma_min) * frac


@dataclass
class SemanticLossConfig:
    lambda_src: float = 1.0
    lambda_hdce: float = 1.0
    contrast_kind: str = "dce"  # "dce" or "infonce": family of the contrastive term
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    relation: RelationConfig = field(default_factory=RelationConfig)
    schedule: CurriculumSchedule = field(default_factory=CurriculumSchedule)

    def __post_init__(self):
        if self.lambda_src < 0 or self.lambda_hdce < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda_src == 0 and self.lambda_hdce == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.contrast_kind not in ("dce", "infonce"):
            raise ValueError(f"contrast_kind must be 'dce' or 'infonce', got {self.contrast_kind!r}")


@dataclass
class SemanticDiagnostics:
    l_src: float
    l_hdce: float
    gamma: float
    l_infonce: float = math.nan
    l_dce: float = math.nan
    npc_mean: float = math.nan
    npc_min: float = math.nan


@dataclass
class SemanticLossResult:
    loss: float
    grad_z: np.ndarray
    grad_w: np.ndarray
    diagnostics: SemanticDiagnostics


def semantic_loss(z, w, cfg: SemanticLossConfig, step: int = 0,
                  with_diagnostics: bool = True) -> SemanticLossResult:
    """Weighted sum of the relation-consistency and hard-negative losses.

    gamma is read off the curriculum at ``step``. Loss and gradients are the
    exact linear combination of the two terms; a zero weight skips its term
    entirely. Diagnostics (reference InfoNCE/DCE losses and coupling stats)
    are reporting only and contribute no gradient.
    """
    zm = as_embedding_matrix(z)
    wm = as_embedding_matrix(w)
    gamma = gamma_at(cfg.schedule, step)
    ccfg = ContrastConfig(tau=cfg.contrast.tau, gamma=gamma,
                          detach_weights=cfg.contrast.detach_weights)

    loss = 0.0
    grad_z = np.zeros_like(zm)
    grad_w = np.zeros_like(wm)
    l_src = math.nan
    l_h = math.nan
    if cfg.lambda_src > 0:
        sres = src_loss(zm, wm, cfg.relation)
        l_src = sres.loss
        loss += cfg.lambda_src * sres.loss
        grad_z += cfg.lambda_src * sres.grad_z
        grad_w += cfg.lambda_src * sres.grad_w
    if cfg.lambda_hdce > 0:
        hard = hdce if cfg.contrast_kind == "dce" else hinfonce
        hres = hard(zm, wm, ccfg)
        l_h = hres.loss
        loss += cfg.lambda_hdce * hres.loss
        grad_z += cfg.lambda_hdce * hres.grad_z
        grad_w += cfg.lambda_hdce * hres.grad_w

    diag = SemanticDiagnostics(l_src=l_src, l_hdce=l_h, gamma=gamma)
    if with_diagnostics:
        if math.isnan(l_src):
            diag.l_src = src_loss(zm, wm, cfg.relation).loss
        if math.isnan(l_h):
            hard = hdce if cfg.contrast_kind == "dce" else hinfonce
            diag.l_hdce = hard(zm, wm, ccfg).loss
        ires = infonce(zm, wm, ccfg)
        diag.l_infonce = ires.loss
        diag.l_dce = dce(zm, wm, ccfg).loss
        diag.npc_mean = float(ires.npc.mean())
        diag.npc_min = float(ires.npc.min())
    return SemanticLossResult(loss=float(loss), grad_z=grad_z, grad_w=grad_w,
                              diagnostics=diag)
