"""Training loop for the projection head on a synthetic paired task.

One run: build (or repeatedly re-sample) a paired feature map, sample K
patch locations per step, embed both sides through the head(s), take an
SGD-with-momentum step on the composite loss, and record per-step losses.
The same index array object is used for both sides of each step, which is
what makes row k of z and w a positive pair. Final metrics are computed
with the trained head on the last pair and index set:

- top1_retrieval: fraction of queries w_k whose nearest input embedding is
  their own z_k;
- src_div: the relation-consistency divergence of the final embeddings;
- cluster_consistency: fraction of patches whose most similar other patch
  on the output side shares their ground-truth cluster.

Runs are bit-reproducible from (task spec, loss config, optimizer config):
all randomness flows through three child streams of the run seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embedding import (FeatureMap, ProjectionHead, gather_patches,
                        head_backward, head_forward, init_head,
                        sample_patch_indices)
from .numerics import derive_rng
from .relation import src_loss
from .semantic import SemanticLossConfig, semantic_loss
from .synthetic import SyntheticTaskSpec, generate_pair

__all__ = [
    "FinalMetrics",
    "OptimizerConfig",
    "RunMetrics",
    "StepRecord",
    "TrainResult",
    "train",
]


@dataclass
class OptimizerConfig:
    steps: int = 2000
    lr: float = 0.05
    momentum: float = 0.9
    k: int = 256            # patches per step, clamped to H*W
    embed_dim: int = 64
    seed: int = 0
    resample_pairs: bool = False   # fresh feature-map pair every step
    shared_head: bool = True       # one head for both sides (two-head ablation off)
    normalize_embeddings: bool = True
    diagnostics: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be nonnegative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.k < 2:
            raise ValueError("need k >= 2 patches")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be positive")


@dataclass
class StepRecord:
    step: int
    l_semantic: float
    l_src: float
    l_hdce: float
    l_infonce: float
    gamma: float
    npc_mean: float


@dataclass
class FinalMetrics:
    top1_retrieval: float
    src_div: float
    cluster_consistency: float


@dataclass
class RunMetrics:
    records: list[StepRecord] = field(default_factory=list)
    final: FinalMetrics = None


@dataclass
class TrainResult:
    metrics: RunMetrics
    head: ProjectionHead
    head_out: ProjectionHead  # same object as head when shared
    fm_in: FeatureMap
    fm_out: FeatureMap
    labels: np.ndarray
    indices: np.ndarray


class _Momentum:
    """Classic momentum: v <- mu v + g; theta <- theta - lr v."""

    def __init__(self, head: ProjectionHead, mu: float, lr: float):
        self.head = head
        self.mu = mu
        self.lr = lr
        self.v = [np.zeros_like(p) for p in (head.w1, head.b1, head.w2, head.b2)]

    def step(self, grads) -> None:
        params = (self.head.w1, self.head.b1, self.head.w2, self.head.b2)
        gs = (grads.w1, grads.b1, grads.w2, grads.b2)
        for v, p, g in zip(self.v, params, gs):
            v *= self.mu
            v += g
            p -= self.lr * v


def train(task: SyntheticTaskSpec, loss_cfg: SemanticLossConfig,
          opt: OptimizerConfig) -> TrainResult:
    rng_task = derive_rng(opt.seed, 0)
    rng_head = derive_rng(opt.seed, 1)
    rng_sample = derive_rng(opt.seed, 2)

    k = min(opt.k, task.height * task.width)
    head = init_head(rng_head, task.channels, opt.embed_dim,
                     normalize=opt.normalize_embeddings)
    head_out = head if opt.shared_head else init_head(
        rng_head, task.channels, opt.embed_dim, normalize=opt.normalize_embeddings)
    optim = _Momentum(head, opt.momentum, opt.lr)
    optim_out = None if opt.shared_head else _Momentum(head_out, opt.momentum, opt.lr)

    fm_in, fm_out, labels = generate_pair(rng_task, task)
    metrics = RunMetrics()
    idx = None
    for step in range(opt.steps):
        if opt.resample_pairs and step > 0:
            fm_in, fm_out, labels = generate_pair(rng_task, task)
        idx = sample_patch_indices(rng_sample, task.height, task.width, k)
        x_in = gather_patches(fm_in, idx)
        x_out = gather_patches(fm_out, idx)
        z, cache_z = head_forward(head, x_in)
        w, cache_w = head_forward(head_out, x_out)
        res = semantic_loss(z, w, loss_cfg, step, with_diagnostics=opt.diagnostics)
        gz_head, _ = head_backward(cache_z, res.grad_z)
        gw_head, _ = head_backward(cache_w, res.grad_w)
        if opt.shared_head:
            total = _add_grads(gz_head, gw_head)
            optim.step(total)
        else:
            optim.step(gz_head)
            optim_out.step(gw_head)
        d = res.diagnostics
        metrics.records.append(StepRecord(
            step=step, l_semantic=res.loss, l_src=d.l_src, l_hdce=d.l_hdce,
            l_infonce=d.l_infonce, gamma=d.gamma, npc_mean=d.npc_mean))

    metrics.final = _final_metrics(head, head_out, fm_in, fm_out, labels, idx, loss_cfg)
    return TrainResult(metrics=metrics, head=head, head_out=head_out,
                       fm_in=fm_in, fm_out=fm_out, labels=labels, indices=idx)


def _add_grads(a, b):
    from .embedding import HeadGrads
    return HeadGrads(a.w1 + b.w1, a.b1 + b.b1, a.w2 + b.w2, a.b2 + b.b2)


def _final_metrics(head, head_out, fm_in, fm_out, labels, idx,
                   loss_cfg: SemanticLossConfig) -> FinalMetrics:
    z, _ = head_forward(head, gather_patches(fm_in, idx))
    w, _ = head_forward(head_out, gather_patches(fm_out, idx))
    k = z.shape[0]

    sim_zw = z @ w.T  # [j, k] = z_j . w_k
    top1 = float(np.mean(np.argmax(sim_zw, axis=0) == np.arange(k)))

    src = src_loss(z, w, loss_cfg.relation).loss

    sim_ww = w @ w.T
    np.fill_diagonal(sim_ww, -np.inf)
    nearest = np.argmax(sim_ww, axis=1)
    lab = labels[idx]
    consistency = float(np.mean(lab[nearest] == lab))
    return FinalMetrics(top1_retrieval=top1, src_div=src,
                        cluster_consistency=consistency)
