"""PH-VAE network: S encoder branches over x, x**2, ..., x**S feeding one shared decoder.

Each branch has its own first layer (``enc.{s}.W``, ``enc.{s}.b``) while the
mean/log-variance heads and the decoder are shared by all branches. The
branch posteriors are fused into one Gaussian whose mean is the branch mean
average and whose variance is the branch variance average.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from phvae import autodiff as ad
from phvae import rng as rngmod
from phvae.autodiff import Tensor
from phvae.data import ExpandedBatch
from phvae.errors import ConfigError, DataError, DimensionError
from phvae.rng import Rng

ACTIVATIONS = ("relu", "sigmoid", "tanh")
SNAPSHOT_FORMAT = "phvae-params/1"


@dataclass
class ModelConfig:
    input_dim: int = 20
    hidden_dim: int = 256
    latent_dim: int = 10
    S: int = 3
    A: float = 1.0
    encoder_activation: str = "relu"
    decoder_activation: str = "sigmoid"
    decoder_hidden: int = 0  # 0 -> single affine decoder layer
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "latent_dim", "S"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"model.{name} must be >= 1, got {getattr(self, name)}")
        if self.decoder_hidden < 0:
            raise ConfigError(f"model.decoder_hidden must be >= 0, got {self.decoder_hidden}")
        if not self.A >= 0:
            raise ConfigError(f"model.A must be >= 0, got {self.A}")
        for name in ("encoder_activation", "decoder_activation"):
            if getattr(self, name) not in ACTIVATIONS:
                raise ConfigError(f"model.{name} must be one of {ACTIVATIONS}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModelConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model fields: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"malformed model config: {exc}") from None


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in canonical (serialization) order."""
    shapes: dict[str, tuple[int, ...]] = {}
    for s in range(1, cfg.S + 1):
        shapes[f"enc.{s}.W"] = (cfg.hidden_dim, cfg.input_dim)
        shapes[f"enc.{s}.b"] = (cfg.hidden_dim,)
    shapes["head.mu.W"] = (cfg.latent_dim, cfg.hidden_dim)
    shapes["head.mu.b"] = (cfg.latent_dim,)
    shapes["head.logvar.W"] = (cfg.latent_dim, cfg.hidden_dim)
    shapes["head.logvar.b"] = (cfg.latent_dim,)
    if cfg.decoder_hidden:
        shapes["dec.hidden.W"] = (cfg.decoder_hidden, cfg.latent_dim)
        shapes["dec.hidden.b"] = (cfg.decoder_hidden,)
        shapes["dec.W"] = (cfg.input_dim, cfg.decoder_hidden)
    else:
        shapes["dec.W"] = (cfg.input_dim, cfg.latent_dim)
    shapes["dec.b"] = (cfg.input_dim,)
    return shapes


@dataclass
class PhVaeParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.arrays)

    def leaves(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.arrays.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1) for v in self.arrays.values()])

    def unflatten(self, flat: Tensor) -> dict[str, Tensor]:
        """Views of a flat parameter tensor, one per named parameter (differentiable)."""
        out, start = {}, 0
        for k, v in self.arrays.items():
            out[k] = ad.segment(flat, start, v.shape)
            start += v.size
        return out

    def copy(self) -> PhVaeParams:
        return PhVaeParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    @property
    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())

    # snapshot container: JSON, arrays in canonical order, floats as shortest round-trip repr
    def to_json(self) -> str:
        doc = {
            "format": SNAPSHOT_FORMAT,
            "config": self.config.to_dict(),
            "arrays": [{"name": k, "shape": list(v.shape), "values": v.reshape(-1).tolist()}
                       for k, v in self.arrays.items()],
        }
        return json.dumps(doc)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> PhVaeParams:
        doc = json.loads(text)
        if doc.get("format") != SNAPSHOT_FORMAT:
            raise DataError(f"not a parameter snapshot (format={doc.get('format')!r})")
        cfg = ModelConfig.from_dict(doc["config"])
        expected = param_shapes(cfg)
        arrays = {}
        for entry in doc["arrays"]:
            arrays[entry["name"]] = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        if {k: v.shape for k, v in arrays.items()} != expected:
            raise DataError("snapshot arrays do not match the stored model config")
        return cls(cfg, {k: arrays[k] for k in expected})

    @classmethod
    def load(cls, path) -> PhVaeParams:
        path = Path(path)
        if not path.exists():
            raise DataError(f"snapshot not found: {path}")
        return cls.from_json(path.read_text())


def init_params(cfg: ModelConfig) -> PhVaeParams:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from the init stream; biases zero."""
    rng = Rng(cfg.seed, rngmod.INIT)
    arrays = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 2:
            bound = 1.0 / math.sqrt(shape[1])
            arrays[name] = bound * (2.0 * rng.uniform(shape) - 1.0)
        else:
            arrays[name] = np.zeros(shape)
    return PhVaeParams(cfg, arrays)


@dataclass
class GaussianLatentStats:
    per_branch: list[tuple[Tensor, Tensor]]
    mu: Tensor
    logvar: Tensor

    @property
    def S(self) -> int:
        return len(self.per_branch)


def encode_branch(x_s: Tensor, s: int, params: dict[str, Tensor], activation: str = "relu"):
    """Branch ``s`` (1-based): h = g(W^s x + b^s), then the shared mean and log-variance heads."""
    W = params.get(f"enc.{s}.W")
    if W is None:
        raise DimensionError(f"no encoder branch {s}")
    h = ad.activation(ad.affine(ad.as_tensor(x_s), W, params[f"enc.{s}.b"]), activation)
    mu = ad.affine(h, params["head.mu.W"], params["head.mu.b"])
    logvar = ad.affine(h, params["head.logvar.W"], params["head.logvar.b"])
    return mu, logvar


def aggregate_latent(per_branch) -> tuple[Tensor, Tensor]:
    """Average branch means; log of the average branch variance."""
    if not per_branch:
        raise ValueError("aggregate_latent needs at least one branch")
    S = len(per_branch)
    mus = [mu for mu, _ in per_branch]
    total = mus[0]
    for m in mus[1:]:
        total = ad.add(total, m)
    mu = ad.scale(total, 1.0 / S) if S > 1 else total
    logvar = ad.logsumexp_branches([lv for _, lv in per_branch], S)
    return mu, logvar


def reparameterize(mu: Tensor, logvar: Tensor, A: float, eps) -> Tensor:
    """z = mu + A * eps * exp(logvar / 2); ``eps`` is a constant draw."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != mu.shape or logvar.shape != mu.shape:
        raise DimensionError(f"reparameterize: mu {mu.shape}, logvar {logvar.shape}, eps {eps.shape}")
    std = ad.exp(ad.scale(logvar, 0.5))
    return ad.add(mu, ad.scale(ad.mul(std, eps), A))


def decode(z: Tensor, params: dict[str, Tensor], activation: str = "sigmoid") -> Tensor:
    h = ad.as_tensor(z)
    if "dec.hidden.W" in params:
        h = ad.activation(ad.affine(h, params["dec.hidden.W"], params["dec.hidden.b"]), "relu")
    return ad.activation(ad.affine(h, params["dec.W"], params["dec.b"]), activation)


def forward(batch: ExpandedBatch, params: dict[str, Tensor], cfg: ModelConfig,
            A: float | None = None, eps=None, rng: Rng | None = None):
    """Encode every branch, fuse, sample one z per row and decode.

    Pass either a fixed ``eps`` of shape (batch, latent_dim) or an ``rng`` to draw it.
    Returns ``(x_hat, GaussianLatentStats)``.
    """
    if batch.S != cfg.S:
        raise DimensionError(f"batch has {batch.S} polynomial powers but model has S={cfg.S}")
    A = cfg.A if A is None else A
    per_branch = [encode_branch(batch.x_powers[s - 1], s, params, cfg.encoder_activation)
                  for s in range(1, cfg.S + 1)]
    mu, logvar = aggregate_latent(per_branch)
    if eps is None:
        if rng is None:
            raise ValueError("forward needs eps or rng")
        eps = rng.normal(mu.shape)
    z = reparameterize(mu, logvar, A, eps)
    x_hat = decode(z, params, cfg.decoder_activation)
    return x_hat, GaussianLatentStats(per_branch, mu, logvar)


def generate(params: PhVaeParams, n: int, A: float, rng: Rng) -> np.ndarray:
    """Decode ``n`` draws of z ~ N(0, A^2 I)."""
    cfg = params.config
    z = A * rng.normal((n, cfg.latent_dim))
    return decode(Tensor(z), params.leaves(requires_grad=False), cfg.decoder_activation).values
