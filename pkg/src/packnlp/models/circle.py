"""Circles of variable radii in a unit square or a perimeter-4 rectangle."""

from __future__ import annotations

import math

import numpy as np

from .base import Block, ConstraintSystem, Instance, InvalidInstanceError, Layout, left_sum, pairs

AREA_BOUND = 1.0 / math.pi
ALPHA_MIN = 1e-3


def _xy_labels(n: int, names=("x", "y")) -> list[str]:
    return [f"{c}[{i}]" for i in range(n) for c in names]


def build_circle(n: int, fixed_alpha: float | None = 1.0, epsilon: float = 1e-8) -> ConstraintSystem:
    """Maximize the radius sum of ``n`` circles in an ``alpha x (2 - alpha)`` box.

    ``fixed_alpha=1`` is the unit square; ``None`` makes the width a variable.
    """
    if int(n) != n or n < 1:
        raise InvalidInstanceError(f"n must be a positive integer, got {n!r}")
    if fixed_alpha is not None and not 0.0 < fixed_alpha <= 1.0:
        raise InvalidInstanceError("fixed_alpha must lie in (0, 1]")
    n = int(n)
    family = "circle_rect" if fixed_alpha is None else "circle_square"
    instance = Instance(family=family, n=n, epsilon=epsilon)
    return _build(instance, fixed_alpha)


def build_circle_instance(instance: Instance) -> ConstraintSystem:
    return _build(instance, None if instance.family == "circle_rect" else 1.0)


def _build(instance: Instance, fixed_alpha: float | None) -> ConstraintSystem:
    n, eps = instance.n, instance.epsilon
    c_cont = 1.0 + 2.0 * eps
    c_sep = 1.0 + eps
    free_alpha = fixed_alpha is None

    lay = Layout()
    if free_alpha:
        lay.add("alpha", 1, labels=["alpha"])
    lay.add("pose", (n, 2), labels=_xy_labels(n))
    lay.add("r", n, labels=[f"r[{i}]" for i in range(n)])
    pose_ix = lay.index("pose")
    r_ix = lay.index("r")
    a_ix = int(lay.index("alpha")[0]) if free_alpha else -1

    lower = np.zeros(lay.size)
    upper = np.empty(lay.size)
    if free_alpha:
        upper[lay.slice("pose")] = np.tile([1.0, 2.0 - ALPHA_MIN], n)
    else:
        upper[lay.slice("pose")] = np.tile([fixed_alpha, 2.0 - fixed_alpha], n)
    upper[lay.slice("r")] = (fixed_alpha if not free_alpha else 1.0) / 2.0
    if free_alpha:
        lower[a_ix] = ALPHA_MIN
        upper[a_ix] = 1.0

    def unpack(x):
        p = lay.view(x, "pose")
        alpha = x[a_ix] if free_alpha else fixed_alpha
        return p[:, 0], p[:, 1], lay.view(x, "r"), alpha

    # rows per circle: left, right, bottom, top
    cont_cols = np.empty((4 * n, 3), dtype=int)
    for i in range(n):
        xi, yi = pose_ix[i]
        cont_cols[4 * i + 0] = (xi, r_ix[i], a_ix)
        cont_cols[4 * i + 1] = (xi, r_ix[i], a_ix)
        cont_cols[4 * i + 2] = (yi, r_ix[i], a_ix)
        cont_cols[4 * i + 3] = (yi, r_ix[i], a_ix)

    def containment(x):
        px, py, r, alpha = unpack(x)
        cr = c_cont * r
        height = 2.0 - alpha
        g = np.empty((n, 4))
        g[:, 0] = cr - px
        g[:, 1] = (px + cr) - alpha
        g[:, 2] = cr - py
        g[:, 3] = (py + cr) - height
        jac = np.zeros((n, 4, 3))
        jac[:, 0, 0], jac[:, 1, 0], jac[:, 2, 0], jac[:, 3, 0] = -1.0, 1.0, -1.0, 1.0
        jac[:, :, 1] = c_cont
        jac[:, 1, 2] = -1.0
        jac[:, 3, 2] = 1.0
        return g.reshape(-1), jac.reshape(-1, 3)

    blocks = [Block("containment", "containment", cont_cols, containment)]

    if free_alpha:
        cap_cols = np.stack([r_ix, np.full(n, a_ix)], axis=1)

        def radius_cap(x):
            _, _, r, alpha = unpack(x)
            jac = np.tile([1.0, -0.5], (n, 1))
            return r - alpha / 2.0, jac

        blocks.append(Block("radius_cap", "containment", cap_cols, radius_cap))

    P = pairs(n)
    I, J = P[:, 0], P[:, 1]
    sep_cols = np.stack([pose_ix[I, 0], pose_ix[J, 0], pose_ix[I, 1], pose_ix[J, 1], r_ix[I], r_ix[J]], axis=1)

    def separation(x):
        px, py, r, _ = unpack(x)
        dx = px[I] - px[J]
        dy = py[I] - py[J]
        s = c_sep * (r[I] + r[J])
        g = s * s - (dx * dx + dy * dy)
        jac = np.stack([-2 * dx, 2 * dx, -2 * dy, 2 * dy, 2 * c_sep * s, 2 * c_sep * s], axis=1)
        return g, jac

    blocks.append(Block("separation", "separation", sep_cols, separation))

    def area(x):
        r = lay.view(x, "r")
        g = left_sum(ri * ri for ri in r) - AREA_BOUND
        return np.array([g]), (2.0 * r)[None, :]

    blocks.append(Block("area", "area", r_ix[None, :], area))

    r_sl = lay.slice("r")

    def objective(x):
        grad = np.zeros(lay.size)
        grad[r_sl] = 1.0
        return float(left_sum(x[r_sl])), grad

    return ConstraintSystem(
        instance,
        lay,
        lower,
        upper,
        blocks,
        objective,
        constants={"c_cont": c_cont, "c_sep": c_sep, "alpha": fixed_alpha, "area_bound": AREA_BOUND},
    )
