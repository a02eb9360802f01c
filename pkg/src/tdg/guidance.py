"""Tied diffusion guidance: percentile noise tying over twin trajectories.

Two denoising trajectories start from the same noise and advance in
lockstep.  At each step both noise predictions are classifier-free-guided,
then tied element-wise: entries whose absolute difference falls at or below
the eta-th percentile of the difference distribution are replaced by the
elementwise mean, the rest keep their own prediction.  The tying fraction
eta follows a schedule over normalized time tau = t/T:

    eta(tau) = 1                                          tau >  t_max
             = ((tau - t_min) / (t_max - t_min)) ** k     t_min <= tau <= t_max
             = 0                                          tau <  t_min

so generation is fully tied early (high tau) and independent at the end.

Two degenerate schedules are recognised explicitly because the piecewise
formula cannot express them: t_min = t_max = 0 disables tying (eta = 0
everywhere) and t_min = t_max = 1 never releases it (eta = 1 everywhere).

Percentile convention (fixed here; the tying operator and its test oracle
must share it): linear interpolation over the sorted absolute differences
at rank eta * (n - 1), inclusive (<=) comparison.  eta = 0 is special-cased
to "no averaging" -- the literal 0th percentile would still average the
minimum-difference element, which contradicts independent generation.  The
literal behaviour stays available behind ``literal_zero``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from . import rng
from .errors import ParameterError, ShapeMismatchError
from .mixture import AnalyticDenoiser, Condition, GaussianMixture, condition_restrict
from .schedule import DiffusionSchedule, LatentState, reverse_step

__all__ = [
    "TieSchedule",
    "TiedSamplerConfig",
    "TiedPair",
    "StepDiagnostics",
    "NoisePredictor",
    "cfg_combine",
    "eta_schedule",
    "tie_noise",
    "tied_step",
    "tied_sample",
    "cfg_sample",
]


class NoisePredictor(Protocol):
    """Noise-predictor interface: ``(x, cond, t) -> eps`` with cond=None unconditional."""

    def __call__(self, x: np.ndarray, cond: Condition | None, t: int) -> np.ndarray: ...


@dataclass(frozen=True)
class TieSchedule:
    """Parameters of the tying-fraction schedule eta(tau; t_min, t_max, k)."""

    t_min: float
    t_max: float
    k: float

    def __post_init__(self):
        if not (self.k > 0.0):
            raise ParameterError(f"exponent k must be positive, got {self.k}")
        if not (0.0 <= self.t_min <= self.t_max <= 1.0):
            raise ParameterError(
                f"need 0 <= t_min <= t_max <= 1, got t_min={self.t_min}, t_max={self.t_max}"
            )
        if self.t_min == self.t_max and self.t_max not in (0.0, 1.0):
            raise ParameterError(
                "t_min == t_max is only meaningful as the degenerate schedules 0 (never tie) or 1 (always tie)"
            )

    @classmethod
    def never(cls, k: float = 10.0) -> "TieSchedule":
        """Tying disabled: eta = 0 at every step."""
        return cls(t_min=0.0, t_max=0.0, k=k)

    @classmethod
    def always(cls, k: float = 10.0) -> "TieSchedule":
        """Tying never released: eta = 1 at every step."""
        return cls(t_min=1.0, t_max=1.0, k=k)

    @property
    def disabled(self) -> bool:
        return self.t_max == 0.0

    @property
    def permanent(self) -> bool:
        return self.t_min == 1.0


@dataclass(frozen=True)
class TiedSamplerConfig:
    """Sampler settings: guidance scale, step count, tie schedule, seed."""

    guidance_scale: float
    steps: int
    tie: TieSchedule
    seed: int

    def __post_init__(self):
        if self.guidance_scale < 0.0:
            raise ParameterError(f"guidance scale must be >= 0, got {self.guidance_scale}")
        if self.steps < 2:
            raise ParameterError(f"step count must be >= 2, got {self.steps}")


@dataclass(frozen=True)
class TiedPair:
    """Two lockstep trajectories with their conditions."""

    state_R: LatentState
    state_G: LatentState
    cond_R: Condition
    cond_G: Condition

    def __post_init__(self):
        if self.state_R.t != self.state_G.t:
            raise ParameterError(
                f"trajectories out of lockstep: t_R={self.state_R.t}, t_G={self.state_G.t}"
            )
        if self.state_R.x.shape != self.state_G.x.shape:
            raise ShapeMismatchError(
                f"trajectory shapes differ: {self.state_R.x.shape} vs {self.state_G.x.shape}"
            )

    @property
    def t(self) -> int:
        return self.state_R.t


@dataclass(frozen=True)
class StepDiagnostics:
    """Per-step trace record: tying strength and trajectory divergence."""

    step: int
    tau: float
    eta: float
    averaged_fraction: float
    trajectory_l2: float


def cfg_combine(eps_uncond: np.ndarray, eps_cond: np.ndarray, s_g: float) -> np.ndarray:
    """Classifier-free guidance: eps_u + s_g * (eps_c - eps_u).

    The endpoints s_g = 0 and s_g = 1 return the respective input exactly
    rather than through the affine form, which can differ by an ulp.
    """
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    eps_cond = np.asarray(eps_cond, dtype=float)
    if eps_uncond.shape != eps_cond.shape:
        raise ShapeMismatchError(
            f"prediction shapes differ: {eps_uncond.shape} vs {eps_cond.shape}"
        )
    if s_g == 0.0:
        return eps_uncond.copy()
    if s_g == 1.0:
        return eps_cond.copy()
    return eps_uncond + s_g * (eps_cond - eps_uncond)


def eta_schedule(tau: float, tie: TieSchedule) -> float:
    """Tying fraction at normalized time tau; total on [0, 1]."""
    if tie.disabled:
        return 0.0
    if tie.permanent:
        return 1.0
    if tau > tie.t_max:
        return 1.0
    if tau < tie.t_min:
        return 0.0
    return ((tau - tie.t_min) / (tie.t_max - tie.t_min)) ** tie.k


def _linear_percentile(sorted_values: np.ndarray, q: float) -> float:
    """Percentile at fraction q of pre-sorted values, linear interpolation."""
    n = sorted_values.shape[0]
    h = q * (n - 1)
    lo = int(h)
    if lo >= n - 1:
        return float(sorted_values[n - 1])
    a = sorted_values[lo]
    b = sorted_values[lo + 1]
    return float(a + (h - lo) * (b - a))


def _tie_masked(
    eps1: np.ndarray, eps2: np.ndarray, eta: float, literal_zero: bool, axis: int | None
) -> tuple[np.ndarray, np.ndarray]:
    if eta == 0.0 and not literal_zero:
        return eps1.copy(), np.zeros(eps1.shape, dtype=bool)
    diff = np.abs(eps1 - eps2)
    if axis is None:
        threshold = _linear_percentile(np.sort(diff, axis=None), eta)
    else:
        s = np.sort(diff, axis=axis)
        n = s.shape[axis]
        h = eta * (n - 1)
        lo = int(h)
        if lo >= n - 1:
            threshold = np.take(s, n - 1, axis=axis)
        else:
            a = np.take(s, lo, axis=axis)
            b = np.take(s, lo + 1, axis=axis)
            threshold = a + (h - lo) * (b - a)
        threshold = np.expand_dims(threshold, axis)
    mask = diff <= threshold
    return np.where(mask, 0.5 * (eps1 + eps2), eps1), mask


def tie_noise(
    eps1: np.ndarray,
    eps2: np.ndarray,
    eta: float,
    *,
    literal_zero: bool = False,
    axis: int | None = None,
) -> np.ndarray:
    """Average eps1/eps2 where they agree to within the eta-th percentile.

    Entries with |eps1 - eps2| at or below the percentile threshold become
    the elementwise mean; all others keep eps1.  ``axis`` selects a
    per-slice threshold instead of the default global one over the
    flattened array.
    """
    eps1 = np.asarray(eps1, dtype=float)
    eps2 = np.asarray(eps2, dtype=float)
    if eps1.shape != eps2.shape:
        raise ShapeMismatchError(f"prediction shapes differ: {eps1.shape} vs {eps2.shape}")
    if not (0.0 <= eta <= 1.0):
        raise ParameterError(f"eta must lie in [0, 1], got {eta}")
    tied, _ = _tie_masked(eps1, eps2, eta, literal_zero, axis)
    return tied


def _guided_prediction(
    denoiser: NoisePredictor, x: np.ndarray, cond: Condition, s_g: float, t: int
) -> np.ndarray:
    return cfg_combine(denoiser(x, None, t), denoiser(x, cond, t), s_g)


def _tied_step(
    pair: TiedPair,
    denoiser: NoisePredictor,
    cfg: TiedSamplerConfig,
    sched: DiffusionSchedule,
) -> tuple[TiedPair, StepDiagnostics]:
    t = pair.t
    if t < 1:
        raise ParameterError("cannot step a pair below t=0")
    tau = sched.tau(t)
    eta = eta_schedule(tau, cfg.tie)
    eps_r = _guided_prediction(denoiser, pair.state_R.x, pair.cond_R, cfg.guidance_scale, t)
    eps_g = _guided_prediction(denoiser, pair.state_G.x, pair.cond_G, cfg.guidance_scale, t)
    tied_r, mask = _tie_masked(eps_r, eps_g, eta, False, None)
    tied_g, _ = _tie_masked(eps_g, eps_r, eta, False, None)
    new_pair = TiedPair(
        state_R=reverse_step(pair.state_R, tied_r, sched),
        state_G=reverse_step(pair.state_G, tied_g, sched),
        cond_R=pair.cond_R,
        cond_G=pair.cond_G,
    )
    diag = StepDiagnostics(
        step=t,
        tau=tau,
        eta=eta,
        averaged_fraction=float(mask.mean()),
        trajectory_l2=float(np.linalg.norm(new_pair.state_R.x - new_pair.state_G.x)),
    )
    return new_pair, diag


def tied_step(
    pair: TiedPair,
    denoiser: NoisePredictor,
    cfg: TiedSamplerConfig,
    sched: DiffusionSchedule,
) -> TiedPair:
    """Advance both trajectories one step with symmetrically tied noise."""
    new_pair, _ = _tied_step(pair, denoiser, cfg, sched)
    return new_pair


def tied_sample(
    world: GaussianMixture,
    cond_R: Condition,
    cond_G: Condition,
    cfg: TiedSamplerConfig,
    sched: DiffusionSchedule,
    *,
    pairing: int = 0,
    on_step: Callable[[StepDiagnostics], None] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the full tied reverse chain from shared noise.

    Returns (reference sample, guide sample); the guide is for diagnostics
    only and never enters a manifest.  Deterministic given (world,
    conditions, config, seed).
    """
    if cfg.steps != sched.T:
        raise ParameterError(f"config steps {cfg.steps} != schedule T {sched.T}")
    condition_restrict(world, cond_R)
    condition_restrict(world, cond_G)
    denoiser = AnalyticDenoiser(world, sched)
    x_init = rng.initial_noise(cfg.seed, world.dim, pairing=pairing, step=sched.T)
    pair = TiedPair(
        state_R=LatentState(x=x_init.copy(), t=sched.T),
        state_G=LatentState(x=x_init.copy(), t=sched.T),
        cond_R=cond_R,
        cond_G=cond_G,
    )
    for _ in range(sched.T):
        pair, diag = _tied_step(pair, denoiser, cfg, sched)
        if on_step is not None:
            on_step(diag)
    return pair.state_R.x, pair.state_G.x


def cfg_sample(
    world: GaussianMixture,
    cond: Condition,
    cfg: TiedSamplerConfig,
    sched: DiffusionSchedule,
    *,
    pairing: int = 0,
) -> np.ndarray:
    """Plain classifier-free-guided sample from the same initial noise.

    This is the independent baseline: tied sampling with tying disabled
    reproduces it bit-for-bit for the reference trajectory.
    """
    if cfg.steps != sched.T:
        raise ParameterError(f"config steps {cfg.steps} != schedule T {sched.T}")
    condition_restrict(world, cond)
    denoiser = AnalyticDenoiser(world, sched)
    x_init = rng.initial_noise(cfg.seed, world.dim, pairing=pairing, step=sched.T)
    state = LatentState(x=x_init, t=sched.T)
    for _ in range(sched.T):
        eps = _guided_prediction(denoiser, state.x, cond, cfg.guidance_scale, state.t)
        state = reverse_step(state, eps, sched)
    return state.x
