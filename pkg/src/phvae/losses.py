"""Reconstruction loss, per-branch Gaussian KL, PH divergence and the MI split.

The PH divergence is the plain average of the branch KLs against N(0, I).
Sign convention: every KL here is the usual non-negative quantity
``-0.5 * sum(1 + logvar - mu**2 - exp(logvar))`` and is *added* to the
reconstruction error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from phvae import autodiff as ad
from phvae.autodiff import Tensor
from phvae.errors import DimensionError, NumericalError


@dataclass
class LossBreakdown:
    recon: float
    kl_per_branch: list[float]
    ph: float
    mi: float
    base_kl: float
    total: float

    @property
    def S(self) -> int:
        return len(self.kl_per_branch)


def kl_gaussian_standard(mu, logvar) -> Tensor:
    """KL[N(mu, exp(logvar)) || N(0, I)] summed over all entries (and batch rows)."""
    mu, logvar = ad.as_tensor(mu), ad.as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise DimensionError(f"kl: mu {mu.shape} vs logvar {logvar.shape}")
    if not (np.isfinite(mu.values).all() and np.isfinite(logvar.values).all()):
        raise NumericalError("kl: non-finite mean or log-variance")
    # -0.5 * sum(1 + lv - mu^2 - e^lv), arranged so an exact zero comes out as +0.0
    inner = ad.sub(ad.add(ad.exp(logvar), ad.square(mu)), ad.pointwise(logvar, 1.0, "add"))
    return ad.scale(ad.reduce(inner, "sum"), 0.5)


def _mean_of(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(terms)) if len(terms) > 1 else total


def ph_divergence(stats) -> Tensor:
    """Average of the branch KLs. ``stats`` is GaussianLatentStats or a list of (mu, logvar)."""
    per_branch = getattr(stats, "per_branch", stats)
    if not per_branch:
        raise ValueError("ph_divergence needs at least one branch")
    return _mean_of([kl_gaussian_standard(mu, lv) for mu, lv in per_branch])


def reconstruction_loss(x_hat, x) -> Tensor:
    """Sum of squared errors over batch rows and features."""
    x_hat = ad.as_tensor(x_hat)
    x = ad.as_tensor(x)
    if x_hat.shape != x.shape:
        raise DimensionError(f"reconstruction: prediction {x_hat.shape} vs target {x.shape}")
    return ad.reduce(x_hat, "mse_sum", x)


def mi_decomposition(stats) -> tuple[float, float]:
    """Split the PH divergence into (mi, base_kl) with mi = sum_{s>=2} KL_s / S and base_kl = KL_1 / S.

    Accepts latent stats, a list of (mu, logvar) pairs, or precomputed branch KLs.
    """
    per_branch = getattr(stats, "per_branch", stats)
    kls = [float(kl_gaussian_standard(*b).values) if isinstance(b, tuple) else float(b)
           for b in per_branch]
    S = len(kls)
    if S == 0:
        raise ValueError("mi_decomposition needs at least one branch")
    mi = sum(kls[1:]) / S if S > 1 else 0.0
    return mi, kls[0] / S


def total_loss(x_hat, x, stats) -> tuple[Tensor, LossBreakdown]:
    """Reconstruction error plus PH divergence. Returns the differentiable total and its parts."""
    per_branch = getattr(stats, "per_branch", stats)
    if not per_branch:
        raise ValueError("total_loss needs at least one branch")
    recon = reconstruction_loss(x_hat, x)
    kls = [kl_gaussian_standard(mu, lv) for mu, lv in per_branch]
    ph = _mean_of(kls)
    total = ad.add(recon, ph)
    kl_vals = [float(k.values) for k in kls]
    mi, base = mi_decomposition(kl_vals)
    bd = LossBreakdown(recon=float(recon.values), kl_per_branch=kl_vals, ph=float(ph.values),
                       mi=mi, base_kl=base, total=float(total.values))
    return total, bd
