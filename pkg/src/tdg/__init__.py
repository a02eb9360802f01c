"""Tied diffusion guidance over analytic denoisers, with benchmark tooling.

Subpackages:

- ``schedule`` / ``mixture``: variance-preserving chain and the exact
  Gaussian-mixture noise predictor
- ``guidance``: classifier-free guidance, percentile noise tying, the
  tied two-trajectory sampler
- ``worlds`` / ``experiments``: the 2-D composition world and the tied vs
  independent comparison
- ``pipeline``: prompts, candidate selection, confidence filtering, human
  validation, manifests
- ``evaluation``: substituted/removed-attribute scoring, chance baselines,
  label agreement, report tables
- ``annotation`` / ``cli``: the annotation service and the stage runner
"""

from .guidance import (
    TiedPair,
    TiedSamplerConfig,
    TieSchedule,
    cfg_combine,
    cfg_sample,
    eta_schedule,
    tie_noise,
    tied_sample,
    tied_step,
)
from .mixture import (
    AnalyticDenoiser,
    Condition,
    GaussianMixture,
    analytic_noise_prediction,
    condition_restrict,
)
from .schedule import (
    DiffusionSchedule,
    LatentState,
    build_vp_schedule,
    forward_diffuse,
    reverse_step,
)
from .worlds import CompositionWorld, make_composition_world

__all__ = [
    "AnalyticDenoiser",
    "Condition",
    "CompositionWorld",
    "DiffusionSchedule",
    "GaussianMixture",
    "LatentState",
    "TiedPair",
    "TiedSamplerConfig",
    "TieSchedule",
    "analytic_noise_prediction",
    "build_vp_schedule",
    "cfg_combine",
    "cfg_sample",
    "condition_restrict",
    "eta_schedule",
    "forward_diffuse",
    "make_composition_world",
    "reverse_step",
    "tie_noise",
    "tied_sample",
    "tied_step",
]

__version__ = "0.1.0"
