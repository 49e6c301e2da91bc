"""Unit circles in a minimum-area ellipse, containment certified by the S-lemma.

Each circle carries a multiplier ``t_i``; the circle lies in the ellipse
``b^2 x^2 + a^2 y^2 <= a^2 b^2`` exactly when the quadratic
``A x^2 + 2 B x + C y^2 + 2 D y + E`` with ``A = t - b^2``, ``B = -t x0``,
``C = t - a^2``, ``D = -t y0`` and ``E = a^2 b^2 + t (x0^2 + y0^2 - r^2)``
is nonnegative, i.e. when its principal minors are.  ``A >= 0`` follows from
``a >= b`` and is not stated.
"""

from __future__ import annotations

import math

import numpy as np

from .base import Block, ConstraintSystem, Instance, Layout, left_sum, pairs


def initial_axis_cap(n: int) -> float:
    # a row of n unit circles fits in an ellipse with a <= n + 1
    return float(n + 1)


def build_ellipse(n: int, options=None, epsilon: float = 1e-8) -> ConstraintSystem:
    from .base import EllipseOptions

    instance = Instance(family="circle_ellipse", n=n, epsilon=epsilon, ellipse=options or EllipseOptions())
    return build_ellipse_instance(instance)


def build_ellipse_instance(instance: Instance) -> ConstraintSystem:
    n, eps, opts = instance.n, instance.epsilon, instance.ellipse
    r_sep = 1.0 + eps
    r_cont = 1.0 + 2.0 * eps
    rc2 = r_cont * r_cont
    dist2 = (2.0 * r_sep) ** 2
    cap = initial_axis_cap(n)

    lay = Layout()
    lay.add("axes", 2, labels=["a", "b"])
    lay.add("pose", (n, 2), labels=[f"{c}[{i}]" for i in range(n) for c in ("x", "y")])
    lay.add("t", n, labels=[f"t[{i}]" for i in range(n)])
    ia, ib = lay.index("axes")
    pose_ix = lay.index("pose")
    t_ix = lay.index("t")

    lower = np.empty(lay.size)
    upper = np.empty(lay.size)
    lower[ia] = max(1.0, math.sqrt(n)) if opts.strengthening else 1.0
    upper[ia] = cap
    lower[ib], upper[ib] = 1.0, cap
    lower[lay.slice("pose")], upper[lay.slice("pose")] = -cap, cap
    lower[lay.slice("t")], upper[lay.slice("t")] = 1.0, np.inf

    def unpack(x):
        p = lay.view(x, "pose")
        return x[ia], x[ib], p[:, 0], p[:, 1], lay.view(x, "t")

    blocks = []

    P = pairs(n)
    I, J = P[:, 0], P[:, 1]
    sep_cols = np.stack([pose_ix[I, 0], pose_ix[J, 0], pose_ix[I, 1], pose_ix[J, 1]], axis=1)

    def separation(x):
        _, _, px, py, _ = unpack(x)
        dx = px[I] - px[J]
        dy = py[I] - py[J]
        g = dist2 - (dx * dx + dy * dy)
        return g, np.stack([-2 * dx, 2 * dx, -2 * dy, 2 * dy], axis=1)

    blocks.append(Block("separation", "separation", sep_cols, separation))

    cont_cols = np.repeat(
        np.stack([np.full(n, ia), np.full(n, ib), pose_ix[:, 0], pose_ix[:, 1], t_ix], axis=1), 5, axis=0
    )

    def containment(x):
        a, b, px, py, t = unpack(x)
        a2, b2 = a * a, b * b
        q = (px * px + py * py) - rc2
        E = a2 * b2 + t * q
        A = t - b2
        C = t - a2
        tx, ty = t * px, t * py
        B2, D2 = tx * tx, ty * ty
        m3 = C * E - D2
        m4 = A * E - B2
        m5 = (A * C) * E - (A * D2 + C * B2)
        g = np.stack([-C, -E, -m3, -m4, -m5], axis=1)

        zero = np.zeros(n)
        one = np.ones(n)
        # partials ordered (a, b, x, y, t)
        dE = np.stack([2 * a * b2 * one, 2 * b * a2 * one, 2 * t * px, 2 * t * py, q], axis=1)
        dA = np.stack([zero, -2 * b * one, zero, zero, one], axis=1)
        dC = np.stack([-2 * a * one, zero, zero, zero, one], axis=1)
        dB2 = np.stack([zero, zero, 2 * t * t * px, zero, 2 * t * px * px], axis=1)
        dD2 = np.stack([zero, zero, zero, 2 * t * t * py, 2 * t * py * py], axis=1)
        c_, e_, a_ = C[:, None], E[:, None], A[:, None]
        d3 = dC * e_ + c_ * dE - dD2
        d4 = dA * e_ + a_ * dE - dB2
        d5 = (dA * c_ + a_ * dC) * e_ + (a_ * c_) * dE - (dA * D2[:, None] + a_ * dD2 + dC * B2[:, None] + c_ * dB2)
        jac = -np.stack([dC, dE, d3, d4, d5], axis=1)
        return g.reshape(-1), jac.reshape(-1, 5)

    blocks.append(Block("containment", "containment", cont_cols, containment))

    def axis_order(x):
        return np.array([x[ib] - x[ia]]), np.array([[-1.0, 1.0]])

    blocks.append(Block("axis_order", "symmetry", np.array([[ia, ib]]), axis_order))

    if opts.strengthening:
        ctr_cols = np.stack([np.full(n, ia), np.full(n, ib), pose_ix[:, 0], pose_ix[:, 1]], axis=1)

        def center_inside(x):
            a, b, px, py, _ = unpack(x)
            a2, b2 = a * a, b * b
            g = (b2 * (px * px) + a2 * (py * py)) - a2 * b2
            jac = np.stack(
                [2 * a * (py * py) - 2 * a * b2, 2 * b * (px * px) - 2 * b * a2, 2 * b2 * px, 2 * a2 * py], axis=1
            )
            return g, jac

        box_cols = np.empty((4 * n, 2), dtype=int)
        for i in range(n):
            box_cols[4 * i + 0] = (pose_ix[i, 0], ia)
            box_cols[4 * i + 1] = (pose_ix[i, 0], ia)
            box_cols[4 * i + 2] = (pose_ix[i, 1], ib)
            box_cols[4 * i + 3] = (pose_ix[i, 1], ib)

        def box(x):
            a, b, px, py, _ = unpack(x)
            g = np.stack([(px + r_cont) - a, (r_cont - px) - a, (py + r_cont) - b, (r_cont - py) - b], axis=1)
            jac = np.tile([[1.0, -1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, -1.0]], (n, 1))
            return g.reshape(-1), jac

        def area_cut(x):
            a, b = x[ia], x[ib]
            return np.array([n - a * b]), np.array([[-b, -a]])

        blocks += [
            Block("center_inside", "strengthening", ctr_cols, center_inside),
            Block("box", "strengthening", box_cols, box),
            Block("area_cut", "area", np.array([[ia, ib]]), area_cut),
        ]

    blocks += _symmetry_blocks(opts, n, pose_ix, unpack)

    def objective(x):
        a, b = x[ia], x[ib]
        grad = np.zeros(lay.size)
        grad[ia] = math.pi * b
        grad[ib] = math.pi * a
        return float((math.pi * a) * b), grad

    return ConstraintSystem(
        instance,
        lay,
        lower,
        upper,
        blocks,
        objective,
        constants={"r_sep": r_sep, "r_cont": r_cont, "dist2": dist2, "axis_cap": cap},
    )


def _symmetry_blocks(opts, n, pose_ix, unpack) -> list[Block]:
    if opts.symmetry == "centroid":

        def centroid(x):
            _, _, px, py, _ = unpack(x)
            g = np.array([-left_sum(px), -left_sum(py)])
            return g, -np.ones((2, n))

        return [Block("centroid", "symmetry", pose_ix.T.copy(), centroid)]
    if n < 2:
        return []
    if opts.symmetry == "sort_x":
        cols = np.stack([pose_ix[:-1, 0], pose_ix[1:, 0]], axis=1)

        def sort_x(x):
            _, _, px, _, _ = unpack(x)
            return px[:-1] - px[1:], np.tile([1.0, -1.0], (n - 1, 1))

        half = math.ceil(n / 2) - 1

        def right_half(x):
            _, _, px, _, _ = unpack(x)
            return np.array([-px[half]]), np.array([[-1.0]])

        return [
            Block("sort_x", "symmetry", cols, sort_x),
            Block("right_half", "symmetry", np.array([[pose_ix[half, 0]]]), right_half),
        ]
    if opts.symmetry == "generic_line":
        al, be = opts.line
        cols = np.stack([pose_ix[:-1, 0], pose_ix[:-1, 1], pose_ix[1:, 0], pose_ix[1:, 1]], axis=1)

        def line_order(x):
            _, _, px, py, _ = unpack(x)
            g = (al * px[:-1] + be * py[:-1]) - (al * px[1:] + be * py[1:])
            return g, np.tile([al, be, -al, -be], (n - 1, 1))

        return [Block("line_order", "symmetry", cols, line_order)]
    return []
