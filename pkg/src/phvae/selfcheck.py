"""Built-in verification: full-loss gradient checks, divergence identities, IDX round trip."""

from __future__ import annotations

import math

import numpy as np

from phvae.autodiff import Tensor, grad_check
from phvae.data import polynomial_expand
from phvae.idx import encode_idx, images_from_bytes, to_bytes_pixels
from phvae.losses import kl_gaussian_standard, mi_decomposition, total_loss
from phvae.model import ModelConfig, forward, init_params
from phvae.rng import Rng


def full_loss_check(input_dim: int, hidden_dim: int, latent_dim: int, S: int, A: float,
                    batch: int = 3, seed: int = 0, decoder_hidden: int = 0, activation: str = "relu",
                    h: float = 1e-5) -> float:
    """Max relative error between the analytic and central-difference gradient of the total loss.

    Biases are randomized too so that every parameter sits at a generic point.
    """
    cfg = ModelConfig(input_dim=input_dim, hidden_dim=hidden_dim, latent_dim=latent_dim, S=S, A=A,
                      decoder_hidden=decoder_hidden, seed=seed, encoder_activation=activation)
    params = init_params(cfg)
    rng = Rng(seed, 99)
    theta = params.flat() + 0.1 * rng.normal(params.size)
    xb = polynomial_expand(rng.uniform((batch, input_dim)), S)
    eps = rng.normal((batch, latent_dim))

    def f(flat: Tensor) -> Tensor:
        x_hat, stats = forward(xb, params.unflatten(flat), cfg, eps=eps)
        return total_loss(x_hat, xb.target, stats)[0]

    return grad_check(f, theta, h)


def random_stats(rng: Rng, S: int, latent_dim: int, batch: int = 2):
    return [(rng.normal((batch, latent_dim)) * 2.0, rng.normal((batch, latent_dim)) * 1.5)
            for _ in range(S)]


def identity_residuals(n: int = 200, seed: int = 1) -> float:
    """Worst residual of total = recon + ph, ph = mean(KL_s), ph = mi + base_kl over random draws."""
    rng = Rng(seed, 98)
    worst = 0.0
    for i in range(n):
        S = 1 + i % 5
        stats = random_stats(rng, S, 4)
        x = rng.uniform((2, 3))
        x_hat = rng.uniform((2, 3))
        _, bd = total_loss(x_hat, x, stats)
        mi, base = mi_decomposition(bd.kl_per_branch)
        worst = max(worst,
                    abs(bd.total - bd.recon - bd.ph),
                    abs(bd.ph - sum(bd.kl_per_branch) / S),
                    abs(bd.ph - mi - base),
                    abs(bd.mi - mi))
    return worst


def idx_round_trip() -> bool:
    rng = Rng(7, 97)
    raw = (rng.uniform((3, 4, 4)) * 256).astype(np.uint8)
    first = encode_idx(raw)
    parsed = images_from_bytes(first).astype(np.float64) / 255.0
    second = encode_idx(to_bytes_pixels(parsed.reshape(3, -1), 4, 4))
    return first == second


def run_all():
    """Yield ``(name, passed, detail)`` for each check."""
    configs = [(4, 8, 3, 3, 1.0), (3, 5, 2, 1, 0.0), (5, 6, 4, 2, 3.0)]
    errs = [full_loss_check(*c, seed=k) for k, c in enumerate(configs)]
    worst = max(errs)
    yield "gradient check", worst < 1e-4, f"max relative error {worst:.3e} (< 1e-04)"

    kl0 = float(kl_gaussian_standard([0.0], [0.0]).values)
    kl1 = float(kl_gaussian_standard([1.0], [0.0]).values)
    kl4 = float(kl_gaussian_standard([0.0], [math.log(4.0)]).values)
    ok = kl0 == 0.0 and abs(kl1 - 0.5) <= 1e-12 and abs(kl4 - 0.5 * (3.0 - math.log(4.0))) <= 1e-9
    yield "KL unit values", ok, f"KL(0,0)={kl0!r} KL(1,0)={kl1!r} KL(0,log4)={kl4!r}"

    r = identity_residuals()
    yield "PH identities", r < 1e-10, f"max residual {r:.3e} (< 1e-10)"

    yield "IDX round trip", idx_round_trip(), "encode -> parse -> encode is byte-identical"
