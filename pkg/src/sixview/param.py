"""x0 / epsilon / v parameterization algebra and min-SNR loss weights.

Pure array functions over a Schedule: the forward noising process,
conversions between prediction targets, and the clamped-SNR loss weight.
All accept any-shaped float arrays and broadcast only the scalar
alpha/sigma coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import Schedule


@dataclass(frozen=True)
class NoisyState:
    """One point of the forward process: x_t with its mixing coefficients."""

    x_t: np.ndarray
    t: int
    alpha_t: float
    sigma_t: float


def add_noise(x0: np.ndarray, eps: np.ndarray, t: int, s: Schedule) -> NoisyState:
    """Forward process: x_t = alpha_t * x0 + sigma_t * eps."""
    x0 = np.asarray(x0, np.float32)
    eps = np.asarray(eps, np.float32)
    if x0.shape != eps.shape:
        raise ValueError(f"add_noise: shapes {x0.shape} and {eps.shape} differ")
    a, sig = s.alpha_sigma(t)
    x_t = np.float32(a) * x0 + np.float32(sig) * eps
    return NoisyState(x_t=x_t, t=int(t), alpha_t=a, sigma_t=sig)


def to_v(x0: np.ndarray, eps: np.ndarray, t: int, s: Schedule) -> np.ndarray:
    """Velocity target: v = alpha_t * eps - sigma_t * x0."""
    a, sig = s.alpha_sigma(t)
    return (np.float32(a) * np.asarray(eps, np.float32)
            - np.float32(sig) * np.asarray(x0, np.float32))


def from_v(x_t: np.ndarray, v: np.ndarray, t: int, s: Schedule):
    """Invert the v parameterization: returns (x0, eps)."""
    a, sig = s.alpha_sigma(t)
    x_t = np.asarray(x_t, np.float32)
    v = np.asarray(v, np.float32)
    x0 = np.float32(a) * x_t - np.float32(sig) * v
    eps = np.float32(sig) * x_t + np.float32(a) * v
    return x0, eps


def from_eps(x_t: np.ndarray, eps: np.ndarray, t: int, s: Schedule):
    """Recover (x0, eps) from a noise prediction."""
    a, sig = s.alpha_sigma(t)
    x_t = np.asarray(x_t, np.float32)
    eps = np.asarray(eps, np.float32)
    x0 = (x_t - np.float32(sig) * eps) / np.float32(a)
    return x0, eps


def prediction_to_x0_eps(x_t: np.ndarray, pred: np.ndarray, t: int, s: Schedule, target: str):
    if target == "v":
        return from_v(x_t, pred, t, s)
    if target == "eps":
        return from_eps(x_t, pred, t, s)
    raise ValueError(f"unknown prediction target {target!r}")


def target_from_x0_eps(x0: np.ndarray, eps: np.ndarray, t: int, s: Schedule, target: str) -> np.ndarray:
    if target == "v":
        return to_v(x0, eps, t, s)
    if target == "eps":
        return np.asarray(eps, np.float32)
    raise ValueError(f"unknown prediction target {target!r}")


def min_snr_weight(t: int, s: Schedule, gamma, target: str) -> float:
    """Clamped-SNR loss weight: min(SNR, gamma)/SNR for eps, /(SNR+1) for v.

    gamma=None disables weighting entirely (weight 1.0); gamma=inf keeps the
    formula with the clamp never binding.
    """
    if gamma is None:
        return 1.0
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    snr = s.snr(t)
    top = min(snr, gamma)
    if target == "eps":
        return float(top / snr)
    if target == "v":
        return float(top / (snr + 1.0))
    raise ValueError(f"unknown prediction target {target!r}")
