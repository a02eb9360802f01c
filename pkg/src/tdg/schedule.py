"""Variance-preserving diffusion schedule and the deterministic reverse step.

The discrete chain runs over steps t = 0..T with signal ratio abar_t,
abar_0 = 1 (clean data) and abar_T ~ 0 (pure noise).  Forward corruption
is the closed form

    x_t = sqrt(abar_t) * x_0 + sqrt(1 - abar_t) * eps

and the reverse update is deterministic (no per-step stochasticity), so
coupled samplers diverge only through their noise predictions:

    x0_hat  = (x_t - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t)
    x_{t-1} = sqrt(abar_{t-1}) * x0_hat + sqrt(1 - abar_{t-1}) * eps_hat

Continuous time is tau = t / T, so tau = 1 is pure noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeMismatchError

__all__ = [
    "DiffusionSchedule",
    "LatentState",
    "build_vp_schedule",
    "forward_diffuse",
    "reverse_step",
    "schedule_to_dict",
    "schedule_from_dict",
]


@dataclass(frozen=True)
class DiffusionSchedule:
    """Discrete noise schedule: step count T and signal ratios abar_0..abar_T.

    Entries must lie in (0, 1], start at exactly 1, and decrease strictly.
    Production schedules should also end below 0.01 (near-pure noise); that
    is a property of sensible parameters, not a construction requirement,
    since tiny step counts used in unit tests legitimately violate it.
    """

    T: int
    alpha_bar: np.ndarray

    def __post_init__(self):
        abar = np.asarray(self.alpha_bar, dtype=float)
        object.__setattr__(self, "alpha_bar", abar)
        if self.T < 1 or abar.shape != (self.T + 1,):
            raise ParameterError(f"alpha_bar must have T+1={self.T + 1} entries, got {abar.shape}")
        if abs(abar[0] - 1.0) > 1e-12:
            raise ParameterError(f"alpha_bar[0] must be 1, got {abar[0]!r}")
        if np.any(abar <= 0.0) or np.any(abar > 1.0):
            raise ParameterError("alpha_bar entries must lie in (0, 1]")
        if np.any(np.diff(abar) >= 0.0):
            raise ParameterError("alpha_bar must be strictly decreasing")

    def tau(self, t: int) -> float:
        """Normalized time tau = t / T (1 = pure noise)."""
        return t / self.T


@dataclass(frozen=True)
class LatentState:
    """A latent vector x together with its step index t."""

    x: np.ndarray
    t: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if not np.all(np.isfinite(x)):
            raise ParameterError("latent state contains non-finite entries")
        if self.t < 0:
            raise ParameterError(f"step index must be >= 0, got {self.t}")


def build_vp_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Linear-beta variance-preserving schedule.

    beta is interpolated linearly from beta_start to beta_end over steps
    1..T and abar_t = prod_{s<=t} (1 - beta_s), abar_0 = 1.
    """
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ParameterError(f"step count must be an integer >= 2, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(
            f"betas must satisfy 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
        )
    betas = np.linspace(beta_start, beta_end, T)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return DiffusionSchedule(T=int(T), alpha_bar=alpha_bar)


def forward_diffuse(x0: np.ndarray, t: int, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """Corrupt x0 to step t with the given noise draw."""
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise ShapeMismatchError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    if not 0 <= t <= sched.T:
        raise ParameterError(f"step {t} outside [0, {sched.T}]")
    a = sched.alpha_bar[t]
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


def reverse_step(state: LatentState, eps_hat: np.ndarray, sched: DiffusionSchedule) -> LatentState:
    """One deterministic reverse update, step t -> t-1."""
    if state.t < 1:
        raise ParameterError("cannot step below t=0")
    if state.t > sched.T:
        raise ParameterError(f"step {state.t} outside schedule range")
    eps_hat = np.asarray(eps_hat, dtype=float)
    if eps_hat.shape != state.x.shape:
        raise ShapeMismatchError(f"eps_hat shape {eps_hat.shape} != state shape {state.x.shape}")
    a_t = sched.alpha_bar[state.t]
    a_prev = sched.alpha_bar[state.t - 1]
    x0_hat = (state.x - np.sqrt(1.0 - a_t) * eps_hat) / np.sqrt(a_t)
    x_prev = np.sqrt(a_prev) * x0_hat + np.sqrt(1.0 - a_prev) * eps_hat
    return LatentState(x=x_prev, t=state.t - 1)


def schedule_to_dict(sched: DiffusionSchedule) -> dict:
    return {"kind": "explicit", "T": sched.T, "alpha_bar": sched.alpha_bar.tolist()}


def schedule_from_dict(doc: dict) -> DiffusionSchedule:
    kind = doc.get("kind", "vp_linear")
    if kind == "vp_linear":
        return build_vp_schedule(
            int(doc["T"]),
            float(doc.get("beta_start", 1e-4)),
            float(doc.get("beta_end", 0.02)),
        )
    if kind == "explicit":
        return DiffusionSchedule(T=int(doc["T"]), alpha_bar=np.asarray(doc["alpha_bar"], dtype=float))
    raise ParameterError(f"unknown schedule kind {kind!r}")
