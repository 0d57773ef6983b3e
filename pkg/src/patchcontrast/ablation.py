"""Seven-way ablation over the loss components.

The grid crosses the contrastive family (InfoNCE vs decoupled) with the
relation-consistency term and hard negative mining; see ABLATION_ROWS for
the seven configurations.

Rows without hard negatives pin the curriculum at gamma = 0, which routes
through the identical code path as their hard-negative counterparts, so a
gamma_max = 0 base config collapses the pairs exactly. Every (row, seed)
run is independent and reproducible; seeds are shared across rows so
per-seed comparisons are paired.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .semantic import CurriculumSchedule, SemanticLossConfig
from .synthetic import SyntheticTaskSpec
from .train import FinalMetrics, OptimizerConfig, train

__all__ = [
    "ABLATION_ROWS",
    "AblationRow",
    "AblationTable",
    "ablation_loss_config",
    "run_ablation",
    "table_csv_rows",
    "table_header",
]


@dataclass(frozen=True)
class AblationRow:
    name: str
    kind: str       # "infonce" or "dce"
    use_src: bool
    use_hneg: bool


ABLATION_ROWS = (
    AblationRow("infonce", "infonce", False, False),
    AblationRow("infonce+src", "infonce", True, False),
    AblationRow("infonce+src+hneg", "infonce", True, True),
    AblationRow("dce", "dce", False, False),
    AblationRow("dce+hneg", "dce", False, True),
    AblationRow("dce+src", "dce", True, False),
    AblationRow("dce+src+hneg", "dce", True, True),
)


def ablation_loss_config(base: SemanticLossConfig, row: AblationRow) -> SemanticLossConfig:
    """Specialize the base loss config to one grid row.

    src off means lambda_src = 0; hneg off means the schedule is pinned at
    gamma = 0 (same code path, exact reduction).
    """
    schedule = base.schedule if row.use_hneg else CurriculumSchedule.constant(0.0)
    return replace(base,
                   lambda_src=base.lambda_src if row.use_src else 0.0,
                   lambda_hdce=base.lambda_hdce if base.lambda_hdce > 0 else 1.0,
                   contrast_kind=row.kind,
                   schedule=schedule)


@dataclass
class AblationTable:
    rows: tuple
    seeds: list[int]
    # finals[row.name][i] is the FinalMetrics for seeds[i]
    finals: dict


def _one_run(args):
    task, loss_cfg, opt, seed = args
    result = train(task, loss_cfg, replace(opt, seed=seed))
    return result.metrics.final


def run_ablation(task: SyntheticTaskSpec, base: SemanticLossConfig,
                 opt: OptimizerConfig, seeds: list[int],
                 workers: int = 1) -> AblationTable:
    if len(seeds) < 2:
        raise ValueError("need at least 2 seeds for mean/stddev")
    jobs = [(row, seed) for row in ABLATION_ROWS for seed in seeds]
    payloads = [(task, ablation_loss_config(base, row), opt, seed)
                for row, seed in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one_run, payloads))
    else:
        outcomes = [_one_run(p) for p in payloads]
    finals = {row.name: [] for row in ABLATION_ROWS}
    for (row, _seed), final in zip(jobs, outcomes):
        finals[row.name].append(final)
    return AblationTable(rows=ABLATION_ROWS, seeds=list(seeds), finals=finals)


_METRICS = ("top1_retrieval", "src_div", "cluster_consistency")


def table_header() -> list[str]:
    header = ["config", "infonce", "dce", "src", "hard_neg", "seeds"]
    for m in _METRICS:
        header += [f"{m}_mean", f"{m}_std"]
    return header


def table_csv_rows(table: AblationTable):
    """One summary row per config: mean and sample stddev per metric."""
    for row in table.rows:
        finals: list[FinalMetrics] = table.finals[row.name]
        out = [row.name,
               int(row.kind == "infonce"), int(row.kind == "dce"),
               int(row.use_src), int(row.use_hneg), len(finals)]
        for m in _METRICS:
            vals = np.array([getattr(f, m) for f in finals])
            out += [float(vals.mean()), float(vals.std(ddof=1))]
        yield out
