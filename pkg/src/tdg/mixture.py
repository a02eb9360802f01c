"""Diagonal Gaussian mixtures and their exact noise predictor.

A mixture with weights w_k, means mu_k and diagonal variances s2_k stays a
mixture under variance-preserving corruption: at step t the marginal is

    p_t(x) = sum_k w_k N(x; sqrt(abar_t) mu_k, abar_t s2_k + (1 - abar_t))

so the score grad log p_t is available in closed form and the Bayes-optimal
noise prediction is

    eps(x, t) = -sqrt(1 - abar_t) * grad log p_t(x).

Conditions reweight components (all-ones mask = unconditional), which is
how "conditioned on a prompt" is modelled for this backend.  Densities are
evaluated through log-sum-exp so large dimensions do not underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import EmptyConditionError, ParameterError, ShapeMismatchError
from .schedule import DiffusionSchedule, LatentState

__all__ = [
    "GaussianMixture",
    "Condition",
    "condition_restrict",
    "log_marginal_density",
    "marginal_score",
    "analytic_noise_prediction",
    "AnalyticDenoiser",
    "world_to_dict",
    "world_from_dict",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of K diagonal Gaussians in d dimensions."""

    weights: np.ndarray   # (K,), sums to 1
    means: np.ndarray     # (K, d)
    variances: np.ndarray  # (K, d), all > 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.atleast_2d(np.asarray(self.variances, dtype=float))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        if w.ndim != 1 or m.shape[0] != w.shape[0] or v.shape != m.shape:
            raise ShapeMismatchError(
                f"inconsistent mixture shapes: weights {w.shape}, means {m.shape}, variances {v.shape}"
            )
        if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError("weights must be nonnegative and sum to 1 within 1e-9")
        if np.any(v <= 0.0):
            raise ParameterError("variances must be strictly positive")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ParameterError("means/variances must be finite")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class Condition:
    """A named reweighting of mixture components.

    The mask is nonnegative with at least one positive entry; an all-ones
    mask is the unconditional case.
    """

    label: str
    component_mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.component_mask, dtype=float)
        object.__setattr__(self, "component_mask", mask)
        if mask.ndim != 1:
            raise ShapeMismatchError("component mask must be 1-D")
        if np.any(mask < 0.0):
            raise ParameterError("component mask entries must be nonnegative")
        if not np.any(mask > 0.0):
            raise EmptyConditionError(f"condition {self.label!r} masks out every component")


def condition_restrict(gmm: GaussianMixture, cond: Condition) -> GaussianMixture:
    """Reweight the mixture by the condition mask and renormalize."""
    if cond.component_mask.shape != gmm.weights.shape:
        raise ShapeMismatchError(
            f"mask has {cond.component_mask.shape[0]} entries, mixture has {gmm.n_components} components"
        )
    w = gmm.weights * cond.component_mask
    total = w.sum()
    if total <= 0.0:
        raise EmptyConditionError(f"condition {cond.label!r} leaves zero total weight")
    return GaussianMixture(weights=w / total, means=gmm.means, variances=gmm.variances)


def _marginal_moments(gmm: GaussianMixture, sched: DiffusionSchedule, t: int):
    """Component means/variances of the step-t marginal."""
    a = sched.alpha_bar[t]
    return np.sqrt(a) * gmm.means, a * gmm.variances + (1.0 - a)


def _component_log_densities(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    # x: (..., d) -> (..., K)
    diff = x[..., None, :] - means
    return -0.5 * np.sum(_LOG_2PI + np.log(variances) + diff * diff / variances, axis=-1)


def _log_weights(weights: np.ndarray) -> np.ndarray:
    # zero-weight components contribute -inf, which logsumexp/softmax handle
    with np.errstate(divide="ignore"):
        return np.log(weights)


def log_marginal_density(gmm: GaussianMixture, sched: DiffusionSchedule, t: int, x: np.ndarray) -> np.ndarray:
    """log p_t(x) for x of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    means, variances = _marginal_moments(gmm, sched, t)
    comp = _component_log_densities(x, means, variances)
    return logsumexp(comp + _log_weights(gmm.weights), axis=-1)


def marginal_score(gmm: GaussianMixture, sched: DiffusionSchedule, t: int, x: np.ndarray) -> np.ndarray:
    """grad_x log p_t(x) for x of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    means, variances = _marginal_moments(gmm, sched, t)
    comp = _component_log_densities(x, means, variances)
    resp = softmax(comp + _log_weights(gmm.weights), axis=-1)  # (..., K)
    pull = (means - x[..., None, :]) / variances          # (..., K, d)
    return np.sum(resp[..., None] * pull, axis=-2)


def analytic_noise_prediction(
    gmm: GaussianMixture,
    cond: Condition,
    state: LatentState,
    sched: DiffusionSchedule,
) -> np.ndarray:
    """Bayes-optimal noise prediction E[eps | x_t, condition].

    Requires t >= 1 so the noise scale sqrt(1 - abar_t) is positive.
    """
    if state.t < 1:
        raise ParameterError("noise prediction is degenerate at t=0 (zero noise scale)")
    if state.t > sched.T:
        raise ParameterError(f"step {state.t} outside schedule range")
    if state.x.shape[-1] != gmm.dim:
        raise ShapeMismatchError(f"state dim {state.x.shape[-1]} != mixture dim {gmm.dim}")
    restricted = condition_restrict(gmm, cond)
    a = sched.alpha_bar[state.t]
    return -np.sqrt(1.0 - a) * marginal_score(restricted, sched, state.t, state.x)


class AnalyticDenoiser:
    """Noise-predictor interface backed by the closed-form mixture score.

    Callable as ``denoiser(x, cond, t)``; ``cond=None`` is unconditional.
    Stateless apart from the world/schedule it wraps, so instances are safe
    to share across concurrent workers.
    """

    def __init__(self, world: GaussianMixture, sched: DiffusionSchedule):
        self.world = world
        self.sched = sched

    def __call__(self, x: np.ndarray, cond: Condition | None, t: int) -> np.ndarray:
        gmm = self.world if cond is None else condition_restrict(self.world, cond)
        if t < 1:
            raise ParameterError("noise prediction is degenerate at t=0 (zero noise scale)")
        a = self.sched.alpha_bar[t]
        return -np.sqrt(1.0 - a) * marginal_score(gmm, self.sched, t, np.asarray(x, dtype=float))


def world_to_dict(gmm: GaussianMixture, conditions: dict[str, Condition] | None = None) -> dict:
    doc = {
        "weights": gmm.weights.tolist(),
        "means": gmm.means.tolist(),
        "variances": gmm.variances.tolist(),
    }
    if conditions:
        doc["conditions"] = {name: c.component_mask.tolist() for name, c in conditions.items()}
    return doc


def world_from_dict(doc: dict) -> tuple[GaussianMixture, dict[str, Condition]]:
    gmm = GaussianMixture(
        weights=np.asarray(doc["weights"], dtype=float),
        means=np.asarray(doc["means"], dtype=float),
        variances=np.asarray(doc["variances"], dtype=float),
    )
    conditions = {
        name: Condition(label=name, component_mask=np.asarray(mask, dtype=float))
        for name, mask in doc.get("conditions", {}).items()
    }
    return gmm, conditions
