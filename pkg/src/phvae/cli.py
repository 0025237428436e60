"""Command-line entry point: ``phvae {gen-data,train,reconstruct,compare,selfcheck}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


from phvae import rng as rngmod
from phvae.config import RunConfig, load_config
from phvae.data import build_dataset, generate_raw, write_csv_matrix
from phvae.errors import ConfigError, PhVaeError
from phvae.metrics import (compare_models, histogram_density, write_comparison_csv,
                           write_density_csv)
from phvae.model import PhVaeParams
from phvae.rng import Rng
from phvae.train import reconstruct, train

log = logging.getLogger("phvae")

OVERRIDES = {
    "seed": "model.seed",
    "epochs": "optimizer.epochs",
    "amplitude": "model.A",
    "s_max": "model.S",
    "lr": "optimizer.lr",
    "batch_size": "optimizer.batch_size",
    "out": "output_dir",
}


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {OVERRIDES[k]: v for k, v in vars(args).items() if k in OVERRIDES and v is not None}
    return cfg.replace(**overrides) if overrides else cfg


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.output_dir:
        raise ConfigError("no output_dir in config (or --out)")
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    out = Path(args.data_out) if args.data_out else _out_dir(cfg) / "data.csv"
    raw = generate_raw(cfg.dataset)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_csv_matrix(out, raw)
        out.with_suffix(".json").write_text(json.dumps({"dataset": cfg.dataset.to_dict()}, indent=2, sort_keys=True))
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None
    print(f"wrote {raw.shape[0]}x{raw.shape[1]} samples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    report = train(cfg, output_dir=out)
    for flag in report.flags:
        log.warning("data flag: %s", flag)
    final = report.rows[-1].total if report.rows else float("nan")
    print(f"trained {len(report.rows)} epochs in {report.wall_seconds:.2f}s; final total {final:.6f}; "
          f"artifacts in {out}")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    snap = Path(args.snapshot) if args.snapshot else out / "params.json"
    params = PhVaeParams.load(snap)
    data = build_dataset(cfg.dataset)
    recon = reconstruct(params, data.x, cfg.model.A, cfg.eval.n_repeats, Rng(cfg.model.seed, rngmod.NOISE + 16))
    write_csv_matrix(out / "reconstructions.csv", recon)
    write_csv_matrix(out / "reconstructions_raw.csv", data.denormalize(recon))
    write_density_csv(out / "density_reconstructed.csv", histogram_density(recon, cfg.eval.n_bins))
    write_density_csv(out / "density_data.csv", histogram_density(data.x, cfg.eval.n_bins))
    print(f"wrote {recon.shape[0]} reconstructions to {out}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    rows, truth = compare_models(cfg, epoch_dir=out / "cells" if args.keep_epochs else None)
    write_comparison_csv(out / "comparison.csv", rows)
    write_density_csv(out / "density_truth.csv", truth)
    baseline = [r for r in rows if r.S == 1]
    if baseline:
        b = min(baseline, key=lambda r: (r.l1_distance, r.A, r.seed))
        write_density_csv(out / "density_baseline.csv", b.density)
    best = min(rows, key=lambda r: (r.l1_distance, r.S, r.A, r.seed))
    write_density_csv(out / "density_best.csv", best.density)
    print(f"{len(rows)} cells; best S={best.S} A={best.A:g} seed={best.seed} l1={best.l1_distance:.4f}")
    return 0


def cmd_selfcheck(args) -> int:
    from phvae.selfcheck import run_all

    ok = True
    for name, passed, detail in run_all():
        ok &= passed
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return 0 if ok else 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phvae", description="Polynomial hierarchical VAE toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", help="JSON run config")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--amplitude", type=float)
        p.add_argument("--s-max", dest="s_max", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--out", help="output directory")
        return p

    p = with_config(sub.add_parser("gen-data", help="generate a synthetic dataset as CSV"))
    p.add_argument("--data-out", help="CSV path (default: <output_dir>/data.csv)")
    p.set_defaults(func=cmd_gen_data)
    with_config(sub.add_parser("train", help="train a model")).set_defaults(func=cmd_train)
    p = with_config(sub.add_parser("reconstruct", help="reconstruct data from a snapshot"))
    p.add_argument("--snapshot", help="parameter snapshot (default: <output_dir>/params.json)")
    p.set_defaults(func=cmd_reconstruct)
    p = with_config(sub.add_parser("compare", help="S x A x seed comparison grid"))
    p.add_argument("--keep-epochs", action="store_true", help="write per-cell epoch CSVs")
    p.set_defaults(func=cmd_compare)
    sub.add_parser("selfcheck", help="gradient and identity checks").set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PhVaeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
