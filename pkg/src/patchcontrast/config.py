"""JSON run configuration.

One document drives the CLI: a synthetic task spec, the loss configuration
and the optimizer settings, all optional with library defaults. Unknown
keys anywhere are rejected by their dotted path, so typos cannot silently
fall back to defaults. If the curriculum warmup is left out it defaults to
half the optimizer's step budget.

Example:

    {
      "task": {"height": 16, "width": 16, "channels": 32, "clusters": 8,
               "noise_sigma": 0.3, "rotation_seed": 7, "layout": "blocks"},
      "loss": {
        "lambda_src": 1.0, "lambda_hdce": 1.0, "contrast_kind": "dce",
        "contrast": {"tau": 0.07, "gamma": 0.0, "detach_weights": false},
        "relation": {"include_self": true, "tau_rel": 1.0, "detach_side": null},
        "schedule": {"gamma_min": 0.0, "gamma_max": 2.0,
                     "warmup_steps": 1000, "shape": "linear"}
      },
      "optimizer": {"steps": 2000, "lr": 0.05, "momentum": 0.9, "k": 256,
                    "embed_dim": 64, "seed": 0, "resample_pairs": false,
                    "shared_head": true, "normalize_embeddings": true,
                    "diagnostics": true}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .contrast import ContrastConfig
from .relation import RelationConfig
from .semantic import CurriculumSchedule, SemanticLossConfig
from .synthetic import SyntheticTaskSpec
from .train import OptimizerConfig

__all__ = ["ConfigError", "HarnessConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass
class HarnessConfig:
    task: SyntheticTaskSpec
    loss: SemanticLossConfig
    optimizer: OptimizerConfig


def _build(cls, doc: dict, path: str, nested=None):
    nested = nested or {}
    allowed = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key: {path}{key}")
        if key in nested:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path}{key} must be an object")
            kwargs[key] = _build(nested[key], value, f"{path}{key}.")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section {path or 'top level'}: {exc}") from exc


def parse_config(doc: dict) -> HarnessConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    for key in doc:
        if key not in ("task", "loss", "optimizer"):
            raise ConfigError(f"unknown config key: {key}")
    task = _build(SyntheticTaskSpec, doc.get("task", {}), "task.")
    optimizer = _build(OptimizerConfig, doc.get("optimizer", {}), "optimizer.")
    loss_doc = dict(doc.get("loss", {}))
    schedule_doc = loss_doc.get("schedule")
    if isinstance(schedule_doc, dict) and "warmup_steps" not in schedule_doc:
        schedule_doc = dict(schedule_doc)
        schedule_doc["warmup_steps"] = optimizer.steps // 2
        loss_doc["schedule"] = schedule_doc
    elif schedule_doc is None and "schedule" not in loss_doc:
        loss_doc["schedule"] = {"warmup_steps": optimizer.steps // 2}
    loss = _build(SemanticLossConfig, loss_doc, "loss.", nested={
        "contrast": ContrastConfig,
        "relation": RelationConfig,
        "schedule": CurriculumSchedule,
    })
    return HarnessConfig(task=task, loss=loss, optimizer=optimizer)


def load_config(path) -> HarnessConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)
