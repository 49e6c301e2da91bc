"""Packing families as block-structured constraint systems."""

from __future__ import annotations

from .base import (
    FAMILIES,
    SYMMETRY_MODES,
    TAGS,
    VARIANTS,
    ConstraintSystem,
    EllipseOptions,
    Instance,
    InvalidInstanceError,
    Layout,
    Solution,
    pairs,
)
from .circle import build_circle, build_circle_instance
from .ellipse import build_ellipse, build_ellipse_instance
from .platonic import build_platonic, build_platonic_instance, platonic_rmin
from .polygon import build_polygon, build_polygon_instance, polygon_rmin


def build_system(instance: Instance) -> ConstraintSystem:
    if instance.is_circle:
        return build_circle_instance(instance)
    if instance.family == "circle_ellipse":
        return build_ellipse_instance(instance)
    if instance.family == "polygon":
        return build_polygon_instance(instance)
    return build_platonic_instance(instance)


def r_min(instance: Instance) -> float | None:
    """Analytic lower bound on the container circumradius, when one exists."""
    if instance.family == "polygon":
        return polygon_rmin(instance.l, instance.m, instance.n)
    if instance.family == "platonic":
        return platonic_rmin(instance.l, instance.m, instance.n)
    return None


def residuals(sys: ConstraintSystem, x):
    return sys.residuals(x)


def jacobian(sys: ConstraintSystem, x):
    return sys.jacobian(x)


def objective(sys: ConstraintSystem, x):
    return sys.objective(x)


__all__ = [
    "FAMILIES",
    "SYMMETRY_MODES",
    "TAGS",
    "VARIANTS",
    "ConstraintSystem",
    "EllipseOptions",
    "Instance",
    "InvalidInstanceError",
    "Layout",
    "Solution",
    "build_circle",
    "build_ellipse",
    "build_platonic",
    "build_polygon",
    "build_system",
    "jacobian",
    "objective",
    "pairs",
    "r_min",
    "residuals",
]
