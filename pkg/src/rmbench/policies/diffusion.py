"""DDPM noise schedule, forward noising, and ancestral sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadTimestep
from .config import PolicyConfig


# The (beta_start, beta_end) range is the usual 1000-step reference; for
# shorter schedules the betas scale by 1000/T_d so the terminal alpha_bar
# stays near zero and ancestral sampling can start from pure noise.
REFERENCE_STEPS = 1000


@dataclass(frozen=True)
class NoiseSchedule:
    """Scaled-linear beta schedule with cached cumulative products.

    Timesteps are 1-based: t in [1, T_d]; index t-1 into the arrays.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    @staticmethod
    def from_config(cfg: PolicyConfig) -> "NoiseSchedule":
        scale = REFERENCE_STEPS / cfg.diffusion_steps
        betas = np.linspace(cfg.beta_start, cfg.beta_end, cfg.diffusion_steps) * scale
        if betas[-1] >= 1.0:
            raise ValueError(
                f"beta_end * {REFERENCE_STEPS}/T_d = {betas[-1]:.3f} >= 1; "
                "lower beta_end or raise diffusion_steps")
        return NoiseSchedule(betas=betas, alpha_bars=np.cumprod(1.0 - betas))

    @property
    def n_steps(self) -> int:
        return len(self.betas)

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.n_steps:
            raise BadTimestep(f"t={t} outside [1, {self.n_steps}]")


def ddpm_forward(x0: np.ndarray, t: int | np.ndarray, eps: np.ndarray,
                 schedule: NoiseSchedule) -> np.ndarray:
    """Noised sample x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.

    Accepts a scalar t, or a per-row integer vector for batched x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if np.isscalar(t) or np.ndim(t) == 0:
        schedule.check_t(int(t))
        abar = schedule.alpha_bars[int(t) - 1]
    else:
        t = np.asarray(t)
        if t.min() < 1 or t.max() > schedule.n_steps:
            raise BadTimestep(f"t range [{t.min()}, {t.max()}] outside schedule")
        abar = schedule.alpha_bars[t - 1].reshape((-1,) + (1,) * (x0.ndim - 1))
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def embed_timesteps(t: np.ndarray, dim: int) -> np.ndarray:
    """Batched sinusoidal embedding, [B] -> [B, dim]."""
    k = np.arange(dim // 2)
    freqs = 10000.0 ** (-2.0 * k / dim)
    angles = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    out = np.empty((len(t), dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def ancestral_sample(predict_eps, dim: int, schedule: NoiseSchedule,
                     rng: np.random.Generator) -> np.ndarray:
    """Sample x_0 from pure noise by iterated denoising.

    ``predict_eps(x_t, t)`` returns the noise estimate for one flat sample.
    The final step (t=1) adds no noise, so a fixed rng yields a fixed
    sample.
    """
    x = rng.standard_normal(dim)
    for t in range(schedule.n_steps, 0, -1):
        beta = schedule.betas[t - 1]
        abar = schedule.alpha_bars[t - 1]
        eps_hat = predict_eps(x, t)
        x = (x - beta / np.sqrt(1.0 - abar) * eps_hat) / np.sqrt(1.0 - beta)
        if t > 1:
            x = x + np.sqrt(beta) * rng.standard_normal(dim)
    return x
