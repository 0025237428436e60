"""Datasets: synthetic generators, min-max normalization, polynomial expansion, batching."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from phvae import rng as rngmod
from phvae.errors import ConfigError, DataError
from phvae.rng import Rng, as_rng

BASE_SOURCES = ("uniform", "lognormal", "normal")
GMM_SOURCES = ("gmm_distorted_1", "gmm_distorted_2", "cluster")
FILE_SOURCES = ("idx_file", "csv_file")
SOURCES = BASE_SOURCES + GMM_SOURCES + FILE_SOURCES

# Pathology 1: five correlated components, squashed by tanh(u) + 0.1 sin(2u).
GMM1_MEANS = np.array([[3.0, 3.0], [-3.0, -3.0], [3.0, -3.0], [-3.0, 3.0], [0.0, 0.0]])
GMM1_COVS = np.array([
    [[1.0, 0.8], [0.8, 1.0]],
    [[1.0, -0.6], [-0.6, 1.0]],
    [[1.0, 0.3], [0.3, 1.0]],
    [[0.5, 0.0], [0.0, 0.5]],
    [[2.0, 1.5], [1.5, 2.0]],
])
GMM1_WEIGHTS = np.array([0.25, 0.25, 0.2, 0.2, 0.1])

# Pathology 2: correlated, anti-correlated and narrow components.
GMM2_MEANS = np.array([[-4.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
GMM2_COVS = np.array([
    [[1.0, 0.8], [0.8, 1.0]],
    [[1.0, -0.8], [-0.8, 1.0]],
    [[0.5, 0.3], [0.3, 0.5]],
])
GMM2_WEIGHTS = np.full(3, 1.0 / 3.0)

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "uniform": {"low": 0.0, "high": 1.0},
    "normal": {"mu": 0.0, "sigma": 1.0},
    "lognormal": {"mu": 0.0, "sigma": 1.0},
    "gmm_distorted_1": {},
    "gmm_distorted_2": {"noise": 0.1},
    "cluster": {"n_clusters": 5, "radius": 3.0, "std": 0.25},
    "idx_file": {"size": 16, "limit": 10},
    "csv_file": {},
}


@dataclass
class DatasetSpec:
    source: str
    n_samples: int = 50
    n_features: int = 20
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)
    path: str | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ConfigError(f"unknown dataset source {self.source!r}; expected one of {SOURCES}")
        if self.source in FILE_SOURCES and not self.path:
            raise ConfigError(f"dataset source {self.source!r} needs a path")
        if self.source not in FILE_SOURCES and self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.source in BASE_SOURCES and self.n_features < 1:
            raise ConfigError(f"n_features must be >= 1, got {self.n_features}")

    def resolved_params(self) -> dict[str, Any]:
        return {**DEFAULT_PARAMS[self.source], **self.params}

    def to_dict(self) -> dict[str, Any]:
        d = {"source": self.source, "n_samples": self.n_samples, "n_features": self.n_features,
             "seed": self.seed, "params": dict(self.params)}
        if self.path is not None:
            d["path"] = self.path
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DatasetSpec:
        if not isinstance(d, dict) or "source" not in d:
            raise ConfigError("dataset spec must be an object with a 'source' field")
        known = {"source", "n_samples", "n_features", "seed", "params", "path"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown dataset fields: {sorted(extra)}")
        try:
            return cls(source=d["source"], n_samples=int(d.get("n_samples", 50)),
                       n_features=int(d.get("n_features", 20)), seed=int(d.get("seed", 0)),
                       params=dict(d.get("params", {})), path=d.get("path"))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed dataset spec: {exc}") from exc


@dataclass
class ExpandedBatch:
    """``x_powers[s]`` holds the elementwise power ``s + 1`` of the normalized batch."""

    x_powers: list[np.ndarray]
    indices: np.ndarray | None = None

    @property
    def target(self) -> np.ndarray:
        return self.x_powers[0]

    @property
    def S(self) -> int:
        return len(self.x_powers)

    def __len__(self):
        return self.x_powers[0].shape[0]


@dataclass
class Dataset:
    """Raw samples plus their per-column normalization into [0, 1]."""

    raw: np.ndarray
    x: np.ndarray
    low: np.ndarray
    high: np.ndarray
    flags: list[str] = field(default_factory=list)
    labels: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return self.low + x * (self.high - self.low)

    def normalize_like(self, raw: np.ndarray) -> np.ndarray:
        """Map other raw samples through this dataset's column ranges (degenerate columns -> 0)."""
        span = self.high - self.low
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (raw - self.low) / safe, 0.0)


# ------------------------------------------------------------- normalization


def minmax_normalize(y) -> tuple[np.ndarray, bool]:
    """Scale a vector onto [0, 1]. Returns ``(x, constant)``; a constant vector maps to zeros."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise DataError("cannot normalize an empty vector")
    bad = ~np.isfinite(y)
    if bad.any():
        i = int(np.argmax(bad))
        raise DataError(f"non-finite value {y[i]!r} at index {i}")
    lo, hi = y.min(), y.max()
    if hi == lo:
        return np.zeros_like(y), True
    return (y - lo) / (hi - lo), False


def normalize_columns(raw: np.ndarray) -> Dataset:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] == 0:
        raise DataError(f"expected a non-empty 2-D sample matrix, got shape {raw.shape}")
    x = np.empty_like(raw)
    flags = []
    for j in range(raw.shape[1]):
        try:
            x[:, j], constant = minmax_normalize(raw[:, j])
        except DataError as exc:
            raise DataError(f"column {j}: {exc}") from None
        if constant:
            flags.append(f"constant feature {j}")
    return Dataset(raw=raw, x=x, low=raw.min(axis=0), high=raw.max(axis=0), flags=flags)


def polynomial_expand(x, S: int) -> ExpandedBatch:
    """Return ``[x, x**2, ..., x**S]`` built by repeated elementwise multiplication."""
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    x = np.asarray(x, dtype=np.float64)
    powers = [x]
    for _ in range(S - 1):
        powers.append(powers[-1] * x)
    return ExpandedBatch(powers)


def make_batches(x, batch_size: int, seed, S: int = 1) -> list[ExpandedBatch]:
    """Shuffle the rows of ``x`` and cut them into expanded minibatches.

    ``seed`` may be an int or an :class:`Rng`; passing the same Rng across
    epochs continues its stream. The final short batch is kept.
    """
    x = np.asarray(x, dtype=np.float64)
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("cannot batch an empty dataset")
    perm = as_rng(seed, rngmod.SHUFFLE).permutation(x.shape[0])
    batches = []
    for start in range(0, len(perm), batch_size):
        idx = perm[start:start + batch_size]
        b = polynomial_expand(x[idx], S)
        b.indices = idx
        batches.append(b)
    return batches


# ---------------------------------------------------------------- generators


def gen_base_distribution(spec: DatasetSpec, rng: Rng | None = None) -> np.ndarray:
    """Samples of shape (n_samples, n_features); each column is one feature set."""
    if spec.source not in BASE_SOURCES:
        raise ConfigError(f"{spec.source!r} is not a base distribution")
    p = spec.resolved_params()
    rng = rng or Rng(spec.seed, rngmod.DATA)
    shape = (spec.n_samples, spec.n_features)
    if spec.source == "uniform":
        low, high = float(p["low"]), float(p["high"])
        if not high > low:
            raise ConfigError(f"uniform needs low < high, got [{low}, {high}]")
        return low + (high - low) * rng.uniform(shape)
    mu, sigma = float(p["mu"]), float(p["sigma"])
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    z = mu + sigma * rng.normal(shape)
    return np.exp(z) if spec.source == "lognormal" else z


def sample_gmm(means, covs, weights, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` points from a Gaussian mixture. Returns ``(points, component labels)``."""
    means = np.asarray(means, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if abs(weights.sum() - 1.0) > 1e-12 or (weights < 0).any():
        raise ConfigError(f"mixture weights must be non-negative and sum to 1, got {weights.tolist()}")
    chols = []
    for k, c in enumerate(covs):
        if not np.allclose(c, c.T):
            raise ConfigError(f"covariance {k} is not symmetric")
        try:
            chols.append(np.linalg.cholesky(c))
        except np.linalg.LinAlgError:
            raise ConfigError(f"covariance {k} is not positive definite") from None
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    labels = np.searchsorted(cdf, rng.uniform(n), side="right")
    labels = np.minimum(labels, len(weights) - 1)
    z = rng.normal((n, means.shape[1]))
    pts = np.empty_like(z)
    for k in range(len(weights)):
        sel = labels == k
        pts[sel] = means[k] + z[sel] @ chols[k].T
    return pts, labels


def _cluster_layout(p: dict[str, Any]):
    if "means" in p:
        means = np.asarray(p["means"], dtype=np.float64)
    else:
        k = int(p["n_clusters"])
        ang = 2.0 * math.pi * np.arange(k) / k
        means = float(p["radius"]) * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    k = len(means)
    std = float(p["std"])
    covs = np.array([np.eye(2) * std * std for _ in range(k)])
    weights = np.asarray(p.get("weights", np.full(k, 1.0 / k)), dtype=np.float64)
    return means, covs, weights


def gen_gmm_distorted(case: str, n: int, seed: int, params: dict[str, Any] | None = None,
                      return_labels: bool = False, stream: int = rngmod.DATA):
    """2-D pathology point clouds.

    ``pathology_1``: five-component mixture passed through tanh(u) + 0.1 sin(2u).
    ``pathology_2``: three-component mixture plus Gaussian noise and 0.1 sin(u).
    ``cluster``: ring of isotropic clusters; geometry comes from ``params``.
    """
    aliases = {"gmm_distorted_1": "pathology_1", "gmm_distorted_2": "pathology_2"}
    case = aliases.get(case, case)
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    rng = Rng(seed, stream)
    if case == "pathology_1":
        u, labels = sample_gmm(GMM1_MEANS, GMM1_COVS, GMM1_WEIGHTS, n, rng)
        pts = np.tanh(u) + 0.1 * np.sin(2.0 * u)
    elif case == "pathology_2":
        p = {**DEFAULT_PARAMS["gmm_distorted_2"], **(params or {})}
        u, labels = sample_gmm(GMM2_MEANS, GMM2_COVS, GMM2_WEIGHTS, n, rng)
        pts = u + float(p["noise"]) * rng.normal(u.shape) + 0.1 * np.sin(u)
    elif case == "cluster":
        p = {**DEFAULT_PARAMS["cluster"], **(params or {})}
        pts, labels = sample_gmm(*_cluster_layout(p), n, rng)
    else:
        raise ConfigError(f"unknown pathology case {case!r}")
    return (pts, labels) if return_labels else pts


def generate_raw(spec: DatasetSpec, n_samples: int | None = None, stream: int = rngmod.DATA) -> np.ndarray:
    """Raw sample matrix for any synthetic source, optionally resized or drawn from another stream."""
    if n_samples is not None:
        spec = DatasetSpec(spec.source, n_samples, spec.n_features, spec.seed, spec.params, spec.path)
    if spec.source in BASE_SOURCES:
        return gen_base_distribution(spec, Rng(spec.seed, stream))
    if spec.source in GMM_SOURCES:
        return gen_gmm_distorted(spec.source, spec.n_samples, spec.seed, spec.params, stream=stream)
    raise ConfigError(f"{spec.source!r} is file-backed, not generated")


def read_csv_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_csv_matrix(path, x: np.ndarray, prefix: str = "x") -> None:
    x = np.atleast_2d(x)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{prefix}{j + 1}" for j in range(x.shape[1])])
        for row in x:
            w.writerow([repr(float(v)) for v in row])


def build_dataset(spec: DatasetSpec) -> Dataset:
    """Materialize a spec: generate or load, then normalize into [0, 1]."""
    if spec.source == "idx_file":
        from phvae.idx import load_idx

        p = spec.resolved_params()
        path = Path(spec.path)
        if not path.exists():
            raise DataError(f"dataset file not found: {path}")
        images = load_idx(path, size=p.get("size"))
        limit = p.get("limit")
        if limit:
            images = images[: int(limit)]
        # pixels are already on [0, 1]; per-pixel rescaling would distort images
        return Dataset(raw=images, x=images.copy(), low=np.zeros(images.shape[1]),
                       high=np.ones(images.shape[1]))
    if spec.source == "csv_file":
        return normalize_columns(read_csv_matrix(spec.path))
    return normalize_columns(generate_raw(spec))
