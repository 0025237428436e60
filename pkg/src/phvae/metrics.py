"""Reconstruction fidelity: histogram densities, L1 distances and the S x A x seed comparison grid."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from phvae import rng as rngmod
from phvae.config import RunConfig
from phvae.data import FILE_SOURCES, build_dataset, generate_raw, normalize_columns
from phvae.errors import DataError
from phvae.rng import Rng
from phvae.train import reconstruct, stabilized_loss, train

COMPARISON_COLUMNS = ["S", "A", "seed", "l1_distance", "stabilized_loss", "wall_seconds", "label"]


@dataclass
class DensityEstimate:
    bin_edges: np.ndarray
    masses: np.ndarray
    n_samples: int


def histogram_density(samples, n_bins: int = 20, range_: tuple[float, float] = (0.0, 1.0)) -> DensityEstimate:
    """Equal-width histogram normalized to unit mass; out-of-range samples land in the end bins."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.size == 0:
        raise DataError("histogram of an empty sample set")
    lo, hi = map(float, range_)
    if n_bins < 1 or not lo < hi:
        raise ValueError(f"need n_bins >= 1 and low < high, got {n_bins}, {range_}")
    idx = np.floor((samples - lo) / (hi - lo) * n_bins)
    idx = np.clip(np.nan_to_num(idx, nan=0.0), 0, n_bins - 1).astype(np.int64)
    counts = np.bincount(idx, minlength=n_bins)
    return DensityEstimate(np.linspace(lo, hi, n_bins + 1), counts / samples.size, samples.size)


def l1_density_distance(p: DensityEstimate, q: DensityEstimate) -> float:
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(p.bin_edges, q.bin_edges):
        raise ValueError("densities use different binning")
    return float(np.abs(p.masses - q.masses).sum())


def write_density_csv(path, d: DensityEstimate) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "mass"])
        for lo, hi, m in zip(d.bin_edges[:-1], d.bin_edges[1:], d.masses):
            w.writerow([repr(float(lo)), repr(float(hi)), repr(float(m))])


def ground_truth_samples(config: RunConfig, data, n_rows: int) -> np.ndarray:
    """Fresh draw of the recipe, min-max normalized per column exactly like training data.

    File-backed datasets have no generator; their own normalized values are used.
    """
    spec = config.dataset
    if spec.source in FILE_SOURCES:
        return data.x
    fresh = generate_raw(spec, n_samples=n_rows, stream=rngmod.GROUND_TRUTH)
    return normalize_columns(fresh).x


@dataclass
class ComparisonRow:
    S: int
    A: float
    seed: int
    l1_distance: float
    stabilized_loss: float
    wall_seconds: float
    density: DensityEstimate | None = None

    @property
    def label(self) -> str:
        return "VAE baseline" if self.S == 1 else "PH-VAE"

    def as_list(self) -> list:
        return [self.S, repr(float(self.A)), self.seed, repr(self.l1_distance), repr(self.stabilized_loss),
                f"{self.wall_seconds:.3f}", self.label]


def run_cell(config: RunConfig, S: int, A: float, seed: int, data=None, truth=None,
             epoch_dir=None) -> ComparisonRow:
    """Train one (S, A, seed) cell, reconstruct, and score it against the ground-truth density."""
    t0 = time.perf_counter()
    cell = config.replace(**{"model.S": int(S), "model.A": float(A), "model.seed": int(seed)})
    cell.output_dir = None
    data = build_dataset(cell.dataset) if data is None else data
    ev = cell.eval
    if truth is None:
        truth = histogram_density(ground_truth_samples(cell, data, data.n_samples * ev.n_repeats), ev.n_bins)
    out = None if epoch_dir is None else Path(epoch_dir) / f"S{S}_A{A:g}_seed{seed}"
    report = train(cell, data=data, output_dir=out)
    recon = reconstruct(report.params, data.x, float(A), ev.n_repeats, Rng(seed, rngmod.NOISE + 16))
    dens = histogram_density(recon, ev.n_bins)
    return ComparisonRow(S=int(S), A=float(A), seed=int(seed), l1_distance=l1_density_distance(dens, truth),
                         stabilized_loss=stabilized_loss(report.totals()),
                         wall_seconds=time.perf_counter() - t0, density=dens)


def compare_models(config: RunConfig, S_values=None, A_values=None, seeds=None,
                   epoch_dir=None) -> tuple[list[ComparisonRow], DensityEstimate]:
    """Evaluate every (S, A, seed) cell in grid order. Returns the rows and the ground-truth density.

    The dataset is fixed by ``config.dataset``; ``seeds`` vary initialization,
    shuffling and noise.
    """
    ev = config.eval
    S_values = list(ev.S_grid if S_values is None else S_values)
    A_values = list(ev.A_grid if A_values is None else A_values)
    seeds = list(ev.seeds if seeds is None else seeds)
    if not (S_values and A_values and seeds):
        raise ValueError("comparison grids must be non-empty")
    data = build_dataset(config.dataset)
    truth = histogram_density(ground_truth_samples(config, data, data.n_samples * ev.n_repeats), ev.n_bins)
    rows = [run_cell(config, S, A, seed, data=data, truth=truth, epoch_dir=epoch_dir)
            for S in S_values for A in A_values for seed in seeds]
    return rows, truth


def write_comparison_csv(path, rows: list[ComparisonRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in rows:
            w.writerow(r.as_list())
