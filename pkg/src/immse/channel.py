"""The Gaussian noise channel z = sqrt(gamma) x + eps and schedule mappings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit


@dataclass(frozen=True)
class NoisySample:
    z: np.ndarray
    gamma: float
    alpha: float
    eps: np.ndarray


def add_noise(x, gamma: float, noise_source: np.random.Generator | None = None, eps=None) -> NoisySample:
    """Push ``x`` through the channel at SNR ``gamma``.

    ``eps`` may be injected directly; otherwise it is drawn from ``noise_source``.
    """
    if gamma < 0:
        raise ValueError(f"SNR must be non-negative, got {gamma}")
    x = np.asarray(x, dtype=float)
    if eps is None:
        if noise_source is None:
            raise ValueError("need a noise source or an explicit eps")
        eps = noise_source.standard_normal(x.shape)
    eps = np.asarray(eps, dtype=float)
    z = np.sqrt(gamma) * x + eps
    alpha = float(np.log(gamma)) if gamma > 0 else -np.inf
    return NoisySample(z=z, gamma=float(gamma), alpha=alpha, eps=eps)


def scaled_input(z, gamma):
    """Variance-bounded network input z / sqrt(1 + gamma)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValueError("SNR must be non-negative")
    z = np.asarray(z, dtype=float)
    if gamma.ndim == 1 and z.ndim == 2:
        gamma = gamma[:, None]
    return z / np.sqrt(1.0 + gamma)


@dataclass(frozen=True)
class CosineScheduleConfig:
    T: int = 4000
    shift: float = 0.008

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not self.shift > 0:
            raise ValueError("shift must be positive")


def alpha_to_timestep(alpha, config: CosineScheduleConfig = CosineScheduleConfig()):
    """Real-valued cosine-schedule timestep whose cumulative signal fraction is sigmoid(alpha)."""
    s = config.shift
    c0 = np.cos(s / (1 + s) * np.pi / 2)
    arg = np.clip(c0 * np.sqrt(expit(np.asarray(alpha, dtype=float))), -1.0, 1.0)
    return config.T * (np.arccos(arg) * 2 * (1 + s) / np.pi - s)


def timestep_to_alpha(t, config: CosineScheduleConfig = CosineScheduleConfig()):
    """Inverse of :func:`alpha_to_timestep`."""
    s = config.shift
    c0 = np.cos(s / (1 + s) * np.pi / 2)
    ct = np.cos((np.asarray(t, dtype=float) / config.T + s) / (1 + s) * np.pi / 2)
    return logit(np.clip((ct / c0) ** 2, 0.0, 1.0))
