"""Finite-difference verification of every analytic gradient in the library.

Central differences with step 1e-6 against the closed-form gradients of
the relation loss, the three contrastive losses, and the composite loss
chained through the projection head's backward pass. The error measure is
relative to the gradient's own scale (see ``rel_error``); inputs near the
rectifier kink are rejected before checking the head so the subgradient
convention cannot poison the comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contrast import ContrastConfig, dce, hdce, infonce
from .embedding import head_backward, head_forward, init_head
from .numerics import derive_rng
from .relation import RelationConfig, src_loss
from .semantic import (CurriculumSchedule, SemanticLossConfig, semantic_loss)

__all__ = ["GradcheckReport", "SuiteResult", "gradcheck_all", "numerical_grad", "rel_error"]

STEP = 1e-6
TOLERANCE = 1e-5


def numerical_grad(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Central-difference gradient of scalar f at x, entry by entry."""
    g = np.zeros_like(x, dtype=np.float64)
    flat_x = x.reshape(-1)
    flat_g = g.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + step
        hi = f()
        flat_x[i] = orig - step
        lo = f()
        flat_x[i] = orig
        flat_g[i] = (hi - lo) / (2.0 * step)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| over the gradient scale max(|a|_inf, |n|_inf, 0.01).

    The floor keeps genuinely vanishing gradients (where central
    differences only return ~1e-10 roundoff noise) from dividing noise by
    noise and reporting a spurious O(1) error.
    """
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-2)
    return float(np.max(np.abs(analytic - numeric)) / scale)


@dataclass
class SuiteResult:
    name: str
    trials: int
    max_rel_error: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < TOLERANCE


@dataclass
class GradcheckReport:
    suites: list[SuiteResult]

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.suites)

    def lines(self):
        for s in self.suites:
            status = "ok" if s.ok else "FAIL"
            yield (f"{s.name:<24} trials={s.trials:<4} "
                   f"max_rel_err={s.max_rel_error:.3e}  [{status}]")


def _random_embeddings(rng, k, d, unit=True):
    m = rng.normal(size=(k, d))
    if unit:
        m /= np.linalg.norm(m, axis=1, keepdims=True)
    return m


def _check_pair_loss(rng, loss_fn, k, d) -> float:
    """Worst relative error of grad_z and grad_w for one random instance."""
    z = _random_embeddings(rng, k, d)
    w = _random_embeddings(rng, k, d)
    res = loss_fn(z, w)
    num_z = numerical_grad(lambda: loss_fn(z, w).loss, z)
    num_w = numerical_grad(lambda: loss_fn(z, w).loss, w)
    return max(rel_error(res.grad_z, num_z), rel_error(res.grad_w, num_w))


def _src_suite(rng, trials):
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(3, 9))
        d = int(rng.integers(2, 9))
        cfg = RelationConfig(include_self=bool(rng.integers(0, 2)),
                             tau_rel=float(rng.uniform(0.5, 2.0)))
        worst = max(worst, _check_pair_loss(
            rng, lambda z, w: src_loss(z, w, cfg), k, d))
    return worst


def _contrast_suite(rng, trials, maker):
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(2, 9))
        d = int(rng.integers(2, 9))
        loss_fn = maker(rng)
        worst = max(worst, _check_pair_loss(rng, loss_fn, k, d))
    return worst


def _head_composite_suite(rng, trials):
    """FD over head parameters of the full loss through shared-head forward."""
    worst = 0.0
    for _ in range(trials):
        k = int(rng.integers(4, 9))
        c = int(rng.integers(2, 9))
        d = int(rng.integers(2, 9))
        cfg = SemanticLossConfig(
            lambda_src=1.0, lambda_hdce=1.0,
            contrast=ContrastConfig(tau=float(rng.uniform(0.5, 2.0)),
                                    gamma=float(rng.uniform(0.0, 2.0))),
            relation=RelationConfig(),
            schedule=CurriculumSchedule.constant(float(rng.uniform(0.0, 2.0))))
        head, x_in, x_out = _kink_free_instance(rng, k, c, d)

        def full_loss():
            z, _ = head_forward(head, x_in)
            w, _ = head_forward(head, x_out)
            return semantic_loss(z, w, cfg, step=0, with_diagnostics=False).loss

        z, cache_z = head_forward(head, x_in)
        w, cache_w = head_forward(head, x_out)
        res = semantic_loss(z, w, cfg, step=0, with_diagnostics=False)
        gz, _ = head_backward(cache_z, res.grad_z)
        gw, _ = head_backward(cache_w, res.grad_w)
        for name in ("w1", "b1", "w2", "b2"):
            analytic = getattr(gz, name) + getattr(gw, name)
            numeric = numerical_grad(full_loss, getattr(head, name))
            worst = max(worst, rel_error(analytic, numeric))
    return worst


def _kink_free_instance(rng, k, c, d, margin=1e-4):
    """(head, patches) whose layer-1 preactivations stay away from 0.

    Also rejects draws whose pre-normalization outputs are too short for a
    stable finite-difference probe (an all-negative preactivation row
    yields the zero vector under zero biases). Head and inputs are redrawn
    together since a near-singular second layer can starve every input.
    """
    for _ in range(1000):
        head = init_head(rng, c, d)
        x_in = rng.normal(size=(k, c))
        x_out = rng.normal(size=(k, c))
        x = np.concatenate([x_in, x_out])
        pre = x @ head.w1 + head.b1
        if np.min(np.abs(pre)) <= margin:
            continue
        y = np.maximum(pre, 0.0) @ head.w2 + head.b2
        if np.min(np.linalg.norm(y, axis=1)) > 0.1:
            return head, x_in, x_out
    raise RuntimeError("could not sample a kink-free gradcheck instance")


def gradcheck_all(seed: int = 0, trials: int = 100) -> GradcheckReport:
    """Run every finite-difference suite; TOLERANCE gates the ok flags."""
    suites = []

    rng = derive_rng(seed, 10)
    suites.append(SuiteResult("src", trials, _src_suite(rng, trials)))

    def make_infonce(r):
        cfg = ContrastConfig(tau=float(r.uniform(0.05, 2.0)))
        return lambda z, w: infonce(z, w, cfg)

    def make_dce(r):
        cfg = ContrastConfig(tau=float(r.uniform(0.05, 2.0)))
        return lambda z, w: dce(z, w, cfg)

    def make_hdce(r):
        cfg = ContrastConfig(tau=float(r.uniform(0.05, 2.0)), gamma=1.0)
        return lambda z, w: hdce(z, w, cfg)

    for stream, (name, maker) in enumerate(
            (("infonce", make_infonce), ("dce", make_dce), ("hdce", make_hdce)),
            start=11):
        rng = derive_rng(seed, stream)
        suites.append(SuiteResult(name, trials, _contrast_suite(rng, trials, maker)))

    rng = derive_rng(seed, 20)
    suites.append(SuiteResult("composite-through-head", trials,
                              _head_composite_suite(rng, trials)))
    return GradcheckReport(suites=suites)
