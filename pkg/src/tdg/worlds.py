"""Toy 2-D composition world for desk-scale experiments.

Axis 0 encodes class (reference on the negative side, guide on the
positive side), axis 1 encodes the attribute (original attribute negative,
target attribute positive).  The four mixture components sit on the grid
corners.  The reference condition models the backbone's composition
failure: prompting for "reference class with the target attribute" mostly
lands on (reference, original attribute), with only a small weight on the
intended corner.  The guide condition concentrates on the target-attribute
column regardless of class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .mixture import Condition, GaussianMixture

__all__ = ["CompositionWorld", "make_composition_world"]

COND_REFERENCE = "reference_with_target_attribute"
COND_GUIDE = "guide_with_target_attribute"


@dataclass(frozen=True)
class CompositionWorld:
    """World plus the two prompt conditions and the target-region test."""

    world: GaussianMixture
    cond_reference: Condition
    cond_guide: Condition
    class_separation: float
    attribute_separation: float

    def in_target_region(self, x: np.ndarray) -> bool:
        """True when x shows the reference class with the target attribute."""
        x = np.asarray(x, dtype=float)
        return bool(x[0] < 0.0 and x[1] > 0.0)

    def conditions(self) -> dict[str, Condition]:
        return {COND_REFERENCE: self.cond_reference, COND_GUIDE: self.cond_guide}


def make_composition_world(
    class_separation: float = 5.0,
    attribute_separation: float = 2.0,
    component_std: float = 0.5,
    bias: tuple[float, float] = (0.9, 0.1),
    typicality: float = 0.45,
) -> CompositionWorld:
    """Build the 2x2 grid world.

    ``bias`` is the reference condition's weight split between the failure
    corner (reference, original attribute) and the intended corner
    (reference, target attribute); the 0.9/0.1 default models a backbone
    that usually ignores the requested substitution.  ``typicality`` is the
    unconditional weight share of each class-typical corner (reference with
    its original attribute, guide with the target attribute); values above
    0.25 encode the class-attribute correlation that makes the substituted
    combination out-of-distribution in the first place.
    """
    if not (bias[0] > 0.0 and bias[1] > 0.0):
        raise ParameterError("both bias weights must be positive")
    if not (0.0 < typicality < 0.5):
        raise ParameterError("typicality must lie in (0, 0.5)")
    c = class_separation / 2.0
    a = attribute_separation / 2.0
    # component order: (ref, orig), (ref, target), (guide, orig), (guide, target)
    means = np.array([[-c, -a], [-c, +a], [+c, -a], [+c, +a]])
    world = GaussianMixture(
        weights=np.array([typicality, 0.5 - typicality, 0.5 - typicality, typicality]),
        means=means,
        variances=np.full((4, 2), component_std**2),
    )
    total = bias[0] + bias[1]
    cond_reference = Condition(
        label=COND_REFERENCE,
        component_mask=np.array([bias[0] / total, bias[1] / total, 0.0, 0.0]),
    )
    cond_guide = Condition(
        label=COND_GUIDE,
        component_mask=np.array([0.0, 0.5, 0.0, 0.5]),
    )
    return CompositionWorld(
        world=world,
        cond_reference=cond_reference,
        cond_guide=cond_guide,
        class_separation=class_separation,
        attribute_separation=attribute_separation,
    )
