"""Adam training loop, epoch logging, snapshots and repeated reconstruction."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from phvae import rng as rngmod
from phvae.autodiff import Tape
from phvae.config import RunConfig
from phvae.data import Dataset, build_dataset, make_batches, polynomial_expand
from phvae.errors import DimensionError, NumericalError
from phvae.losses import LossBreakdown, total_loss
from phvae.model import PhVaeParams, forward, init_params
from phvae.rng import Rng

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, arrays: dict[str, np.ndarray], **hyper) -> AdamState:
        st = cls(**hyper)
        st.m = {k: np.zeros_like(a) for k, a in arrays.items()}
        st.v = {k: np.zeros_like(a) for k, a in arrays.items()}
        return st


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``.

    All gradients are validated before anything is modified.
    """
    for k, p in params.items():
        g = grads.get(k)
        if g is None or g.shape != p.shape:
            raise DimensionError(f"gradient for {k!r} missing or misshapen")
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {k!r}")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for k, p in params.items():
        g = grads[k]
        m = state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        v = state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def epoch_columns(S: int) -> list[str]:
    return ["epoch", "recon", *[f"kl_{s}" for s in range(1, S + 1)], "ph", "mi", "total"]


@dataclass
class EpochRow:
    epoch: int
    recon: float
    kl_per_branch: list[float]
    ph: float
    mi: float
    total: float

    def as_list(self) -> list:
        return [self.epoch, self.recon, *self.kl_per_branch, self.ph, self.mi, self.total]


@dataclass
class TrainReport:
    rows: list[EpochRow]
    wall_seconds: float
    config: dict[str, Any]
    seed: int
    flags: list[str]
    params: PhVaeParams
    snapshot_path: str | None = None

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.rows])

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "seed": self.seed,
            "epochs": len(self.rows),
            "wall_seconds": self.wall_seconds,
            "flags": self.flags,
            "final_total": self.rows[-1].total if self.rows else None,
            "snapshot": self.snapshot_path,
        }


def write_epoch_csv(path, rows: list[EpochRow], S: int) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(epoch_columns(S))
        for r in rows:
            w.writerow([r.epoch, *[repr(float(v)) for v in r.as_list()[1:]]])


def read_epoch_csv(path) -> list[dict[str, float]]:
    with Path(path).open(newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _sum_rows(parts: list[LossBreakdown], epoch: int) -> EpochRow:
    S = parts[0].S
    return EpochRow(
        epoch=epoch,
        recon=sum(p.recon for p in parts),
        kl_per_branch=[sum(p.kl_per_branch[s] for p in parts) for s in range(S)],
        ph=sum(p.ph for p in parts),
        mi=sum(p.mi for p in parts),
        total=sum(p.total for p in parts),
    )


def train(config: RunConfig, data: Dataset | None = None, output_dir=None) -> TrainReport:
    """Train a PH-VAE with Adam, one step per minibatch.

    Epoch rows hold epoch sums over batches. Initialization, shuffling and
    noise use separate streams derived from ``config.model.seed``. When
    ``output_dir`` (or ``config.output_dir``) is set, the epoch CSV is written
    as training goes, so a numerical failure leaves the completed epochs on disk.
    """
    t0 = time.perf_counter()
    data = build_dataset(config.dataset) if data is None else data
    mcfg = dataclasses.replace(config.model, input_dim=data.n_features)
    opt = config.optimizer
    params = init_params(mcfg)
    state = AdamState.for_params(params.arrays, lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
    shuffle_rng = Rng(mcfg.seed, rngmod.SHUFFLE)
    noise_rng = Rng(mcfg.seed, rngmod.NOISE)

    out = output_dir or config.output_dir
    csv_fh = writer = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        csv_fh = (out / "epochs.csv").open("w", newline="")
        writer = csv.writer(csv_fh, lineterminator="\n")
        writer.writerow(epoch_columns(mcfg.S))

    rows: list[EpochRow] = []
    try:
        for epoch in range(1, opt.epochs + 1):
            parts = []
            for bi, batch in enumerate(make_batches(data.x, opt.batch_size, shuffle_rng, mcfg.S)):
                leaves = params.leaves()
                eps = noise_rng.normal((len(batch), mcfg.latent_dim))
                with Tape() as tape:
                    x_hat, stats = forward(batch, leaves, mcfg, eps=eps)
                    loss, bd = total_loss(x_hat, batch.target, stats)
                    if not np.isfinite(bd.total):
                        raise NumericalError(f"non-finite loss at epoch {epoch}, batch {bi}")
                    tape.backward(loss)
                try:
                    adam_step(params.arrays, {k: t.grad for k, t in leaves.items()}, state)
                except NumericalError as exc:
                    raise NumericalError(f"epoch {epoch}, batch {bi}: {exc}") from None
                parts.append(bd)
            row = _sum_rows(parts, epoch)
            rows.append(row)
            if writer is not None:
                writer.writerow([row.epoch, *[repr(float(v)) for v in row.as_list()[1:]]])
                csv_fh.flush()
            log.debug("epoch %d total %.6f", epoch, row.total)
    finally:
        if csv_fh is not None:
            csv_fh.close()

    echo = config.to_dict()
    echo["model"] = mcfg.to_dict()
    report = TrainReport(rows=rows, wall_seconds=time.perf_counter() - t0, config=echo,
                         seed=mcfg.seed, flags=list(data.flags), params=params)
    if out is not None:
        snap = out / "params.json"
        params.save(snap)
        report.snapshot_path = str(snap)
        (out / "report.json").write_text(json.dumps(report.to_json_dict(), indent=2))
    return report


def reconstruct(params: PhVaeParams, x: np.ndarray, A: float, n_repeats: int, rng: Rng) -> np.ndarray:
    """Run the stochastic forward pass ``n_repeats`` times over all rows of ``x`` and stack the outputs."""
    cfg = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise DimensionError(f"data has shape {x.shape} but snapshot expects {cfg.input_dim} features")
    batch = polynomial_expand(x, cfg.S)
    leaves = params.leaves(requires_grad=False)
    outs = []
    for _ in range(n_repeats):
        x_hat, _ = forward(batch, leaves, cfg, A=A, rng=rng)
        outs.append(x_hat.values)
    return np.concatenate(outs, axis=0)


def stabilized_loss(totals, window: int = 10) -> float:
    """Mean of the last ``window`` epoch totals."""
    totals = np.asarray(totals, dtype=np.float64)
    if totals.size == 0:
        return float("nan")
    return float(totals[-window:].mean())
