"""Command-line interface.

Subcommands: gradcheck, loss, train, ablate, simmap. Exit codes: 0 on
success, 1 for usage errors, 2 for I/O or format errors, 3 when the
gradient check fails its tolerance.
"""

from __future__ import annotations

import argparse
import json
import sys

from .ablation import run_ablation, table_csv_rows, table_header
from .config import ConfigError, load_config
from .contrast import ContrastConfig, dce, hdce, hinfonce, infonce
from .embedding import gather_patches, head_forward, init_head, sample_patch_indices
from .fileio import FmapFormatError, load_head, read_fmap, save_head, write_csv
from .gradcheck import gradcheck_all
from .numerics import derive_rng
from .relation import src_loss
from .simmap import export_simmap
from .train import train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_GRADCHECK = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patchcontrast",
                     description="Patch-wise contrastive losses with relation "
                                 "consistency and hard negative mining.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("loss", help="evaluate all losses on a feature-map pair")
    p.add_argument("--input", required=True, help="input-side .fmap file")
    p.add_argument("--output", required=True, help="output-side .fmap file")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--k", type=int, default=None, help="patches to sample")
    p.add_argument("--head", default=None,
                   help="head parameter JSON (default: random init from config seed)")

    p = sub.add_parser("train", help="train the projection head on the synthetic task")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="per-step metrics CSV")
    p.add_argument("--save-head", default=None, help="write trained head JSON here")

    p = sub.add_parser("ablate", help="run the seven-way ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, required=True, help="number of seeds")
    p.add_argument("--out", required=True, help="summary CSV")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simmap", help="export similarity maps for a query location")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--query", required=True, help="query location as H,W")
    p.add_argument("--out", required=True, help="output file prefix")

    return parser


def _cmd_gradcheck(args) -> int:
    report = gradcheck_all(seed=args.seed, trials=args.trials)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_GRADCHECK


def _cmd_loss(args) -> int:
    cfg = load_config(args.config)
    fm_in = read_fmap(args.input)
    fm_out = read_fmap(args.output)
    if (fm_in.height, fm_in.width) != (fm_out.height, fm_out.width):
        raise ConfigError("input and output feature maps must share H and W")
    k = args.k if args.k is not None else cfg.optimizer.k
    k = min(k, fm_in.height * fm_in.width)
    idx = sample_patch_indices(derive_rng(cfg.optimizer.seed, 2),
                               fm_in.height, fm_in.width, k)
    if args.head:
        head = load_head(args.head)
    else:
        head = init_head(derive_rng(cfg.optimizer.seed, 1), fm_in.channels,
                         cfg.optimizer.embed_dim,
                         normalize=cfg.optimizer.normalize_embeddings)
    z, _ = head_forward(head, gather_patches(fm_in, idx))
    w, _ = head_forward(head, gather_patches(fm_out, idx))
    # one-shot evaluation: gamma comes straight from the contrast config
    loss_cfg = cfg.loss
    ccfg = ContrastConfig(tau=loss_cfg.contrast.tau, gamma=loss_cfg.contrast.gamma,
                          detach_weights=loss_cfg.contrast.detach_weights)
    hard = hdce if loss_cfg.contrast_kind == "dce" else hinfonce
    ires = infonce(z, w, ccfg)
    doc = {
        "l_src": src_loss(z, w, loss_cfg.relation).loss,
        "l_dce": dce(z, w, ccfg).loss,
        "l_hdce": hard(z, w, ccfg).loss,
        "l_infonce": ires.loss,
        "gamma": ccfg.gamma,
        "npc_mean": float(ires.npc.mean()),
        "npc_min": float(ires.npc.min()),
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    result = train(cfg.task, cfg.loss, cfg.optimizer)
    header = ["step", "l_semantic", "l_src", "l_hdce", "l_infonce", "gamma", "npc_mean"]
    rows = ([r.step, r.l_semantic, r.l_src, r.l_hdce, r.l_infonce, r.gamma, r.npc_mean]
            for r in result.metrics.records)
    write_csv(args.out, header, rows)
    if args.save_head:
        save_head(args.save_head, result.head)
    final = result.metrics.final
    print(json.dumps({
        "top1_retrieval": final.top1_retrieval,
        "src_div": final.src_div,
        "cluster_consistency": final.cluster_consistency,
    }, indent=2))
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    if args.seeds < 2:
        raise _UsageError("--seeds must be at least 2")
    seeds = [cfg.optimizer.seed + i for i in range(args.seeds)]
    table = run_ablation(cfg.task, cfg.loss, cfg.optimizer, seeds,
                         workers=args.workers)
    write_csv(args.out, table_header(), table_csv_rows(table))
    return EXIT_OK


def _cmd_simmap(args) -> int:
    try:
        qh, qw = (int(v) for v in args.query.split(","))
    except ValueError:
        raise _UsageError(f"--query must be H,W integers, got {args.query!r}")
    fm_in = read_fmap(args.input)
    fm_out = read_fmap(args.output)
    head = load_head(args.head)
    export_simmap(fm_in, fm_out, head, (qh, qw), args.out)
    return EXIT_OK


_COMMANDS = {
    "gradcheck": _cmd_gradcheck,
    "loss": _cmd_loss,
    "train": _cmd_train,
    "ablate": _cmd_ablate,
    "simmap": _cmd_simmap,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FmapFormatError, ConfigError, OSError, json.JSONDecodeError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
