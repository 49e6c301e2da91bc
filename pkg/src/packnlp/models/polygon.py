"""Regular m-gons in a regular l-gon of minimum circumradius (Farkas separation)."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import polygon_constants
from .base import Block, ConstraintSystem, Instance, Layout, pairs
from .bodies import cone_block, distance_block, farkas_blocks, ordering_block


def polygon_rmin(l: int, m: int, n: int) -> float:
    """Area bound on the outer circumradius."""
    outer, inner = polygon_constants(l), polygon_constants(m)
    # ratio first, so that l == m gives exactly sqrt(n)
    ratio = (m * math.sin(inner.phi)) / (l * math.sin(outer.phi))
    return math.sqrt(n * ratio)


def build_polygon(l: int, m: int, n: int, variant: str = "dist", epsilon: float = 1e-8) -> ConstraintSystem:
    return build_polygon_instance(Instance("polygon", n=n, m=m, l=l, variant=variant, epsilon=epsilon))


def build_polygon_instance(instance: Instance) -> ConstraintSystem:
    n, m, l, eps, variant = instance.n, instance.m, instance.l, instance.epsilon, instance.variant
    inner, outer = polygon_constants(m), polygon_constants(l)
    rho_m, rho_l = inner.rho, outer.rho
    c_vert = 1.0 + eps / rho_m
    rho_sep = rho_m + eps / 2.0
    delta = np.asarray(inner.delta)
    jphi = inner.phi * np.arange(m)
    kphi = outer.phi * np.arange(l)
    sk, ck = np.sin(kphi), np.cos(kphi)
    P = pairs(n)
    use_farkas = variant != "inner"

    lay = Layout()
    lay.add("R", 1, labels=["R"])
    lay.add("pose", (n, 3), labels=[f"{c}[{i}]" for i in range(n) for c in ("x", "y", "theta")])
    if use_farkas:
        lay.add(
            "halfspace",
            (n, 3, m),
            labels=[f"{c}[{i},{j}]" for i in range(n) for c in ("a", "b", "s") for j in range(m)],
        )
        lay.add(
            "lambda", (len(P), 2 * m), labels=[f"lambda[{i},{j},{k}]" for i, j in P for k in range(1, 2 * m + 1)]
        )
    else:
        lay.add("sep", (len(P), 2), labels=[f"{c}[{i},{j}]" for i, j in P for c in ("alpha", "d")])
    iR = 0
    pose_ix = lay.index("pose")

    lower = np.full(lay.size, -np.inf)
    upper = np.full(lay.size, np.inf)
    r_min = polygon_rmin(l, m, n)
    lower[iR] = r_min
    th = lay.index("pose")[:, 2]
    lower[th], upper[th] = 0.0, inner.phi
    if use_farkas:
        hs = lay.index("halfspace")
        lower[hs[:, :2, :]], upper[hs[:, :2, :]] = -1.0, 1.0
        lam = lay.slice("lambda")
        lower[lam] = 0.0
        upper[lam] = np.inf if variant == "farkas" else 1.0
    else:
        sep = lay.index("sep")
        lower[sep[:, 0]], upper[sep[:, 0]] = 0.0, 2.0 * math.pi

    def poses(x):
        p = lay.view(x, "pose")
        return p[:, 0], p[:, 1], p[:, 2]

    blocks = []

    cont_cols = np.zeros((n, m, l, 4), dtype=int)
    cont_cols[..., 0] = iR
    cont_cols[..., 1] = pose_ix[:, 0, None, None]
    cont_cols[..., 2] = pose_ix[:, 1, None, None]
    cont_cols[..., 3] = pose_ix[:, 2, None, None]

    def containment(x):
        px, py, th = poses(x)
        R = x[iR]
        ang = th[:, None] + delta[None, :]
        sa, ca = np.sin(ang), np.cos(ang)
        vx = px[:, None] + c_vert * sa
        vy = py[:, None] + c_vert * ca
        g = -(R * rho_l + (sk * vx[:, :, None] + ck * vy[:, :, None]))
        jac = np.empty((n, m, l, 4))
        jac[..., 0] = -rho_l
        jac[..., 1] = -sk
        jac[..., 2] = -ck
        jac[..., 3] = -(sk * (c_vert * ca)[:, :, None] - ck * (c_vert * sa)[:, :, None])
        return g.reshape(-1), jac.reshape(-1, 4)

    blocks.append(Block("containment", "containment", cont_cols.reshape(-1, 4), containment))

    if use_farkas:
        hs = lay.index("halfspace")
        na_cols = np.stack([hs[:, 0, :].reshape(-1), np.repeat(pose_ix[:, 2], m)], axis=1)
        nb_cols = np.stack([hs[:, 1, :].reshape(-1), np.repeat(pose_ix[:, 2], m)], axis=1)
        off_cols = np.stack(
            [
                hs[:, 2, :].reshape(-1),
                hs[:, 0, :].reshape(-1),
                hs[:, 1, :].reshape(-1),
                np.repeat(pose_ix[:, 0], m),
                np.repeat(pose_ix[:, 1], m),
            ],
            axis=1,
        )

        def normal_a(x):
            _, _, th = poses(x)
            h = lay.view(x, "halfspace")
            ang = th[:, None] + jphi[None, :]
            g = h[:, 0, :] - np.sin(ang)
            jac = np.stack([np.ones(n * m), -np.cos(ang).reshape(-1)], axis=1)
            return g.reshape(-1), jac

        def normal_b(x):
            _, _, th = poses(x)
            h = lay.view(x, "halfspace")
            ang = th[:, None] + jphi[None, :]
            g = h[:, 1, :] - np.cos(ang)
            jac = np.stack([np.ones(n * m), np.sin(ang).reshape(-1)], axis=1)
            return g.reshape(-1), jac

        def offset(x):
            px, py, _ = poses(x)
            h = lay.view(x, "halfspace")
            a, b, s = h[:, 0, :], h[:, 1, :], h[:, 2, :]
            X, Y = px[:, None], py[:, None]
            g = s - ((a * X + b * Y) - rho_sep)
            jac = np.stack(
                [np.ones((n, m)), -np.broadcast_to(X, (n, m)), -np.broadcast_to(Y, (n, m)), -a, -b], axis=-1
            )
            return g.reshape(-1), jac.reshape(-1, 5)

        blocks += [
            Block("normal_a", "halfspace", na_cols, normal_a, equality=True),
            Block("normal_b", "halfspace", nb_cols, normal_b, equality=True),
            Block("offset", "halfspace", off_cols, offset, equality=True),
        ]
        blocks += farkas_blocks(lay, P, m, 2, variant)
    else:
        blocks += _inner_blocks(lay, P, m, delta, eps)

    if variant in ("dist", "sym") and len(P):
        blocks.append(distance_block(lay, P, 2, 2.0 * rho_m))
    if variant == "sym" and n >= 2:
        blocks.append(ordering_block(lay, n))
        half = outer.phi / 2.0
        blocks.append(cone_block(lay, n, 2, np.array([[1.0, 0.0], [-math.cos(half), math.sin(half)]])))

    def objective(x):
        grad = np.zeros(lay.size)
        grad[iR] = 1.0
        return float(x[iR]), grad

    return ConstraintSystem(
        instance,
        lay,
        lower,
        upper,
        blocks,
        objective,
        constants={
            "rho_m": rho_m,
            "rho_l": rho_l,
            "c_vert": c_vert,
            "rho_sep": rho_sep,
            "r_min": r_min,
            "sin_k": sk,
            "cos_k": ck,
        },
    )


def _inner_blocks(lay, P, m, delta, eps) -> list[Block]:
    """Direct separating lines: vertices of ``i`` above, of ``j`` below."""
    pose_ix = lay.index("pose")
    sep_ix = lay.index("sep")
    I, J = P[:, 0], P[:, 1]
    half = eps / 2.0
    npairs = len(P)

    def cols_for(E):
        c = np.stack([sep_ix[:, 0], sep_ix[:, 1], pose_ix[E, 0], pose_ix[E, 1], pose_ix[E, 2]], axis=1)
        return np.repeat(c, m, axis=0)

    def project(x, E):
        p = lay.view(x, "pose")
        s = lay.view(x, "sep")
        al, d = s[:, 0:1], s[:, 1:2]
        ang = p[E, 2][:, None] + delta[None, :]
        sa, ca = np.sin(ang), np.cos(ang)
        vx = p[E, 0][:, None] + sa
        vy = p[E, 1][:, None] + ca
        sin_al, cos_al = np.sin(al), np.cos(al)
        proj = sin_al * vx + cos_al * vy
        dproj = np.stack(
            [
                cos_al * vx - sin_al * vy,
                np.zeros((npairs, m)),
                np.broadcast_to(sin_al, (npairs, m)),
                np.broadcast_to(cos_al, (npairs, m)),
                sin_al * ca - cos_al * sa,
            ],
            axis=-1,
        )
        return d, proj, dproj

    def upper_rows(x):
        d, proj, dproj = project(x, I)
        g = (d + half) - proj
        jac = -dproj
        jac[..., 1] = 1.0
        return g.reshape(-1), jac.reshape(-1, 5)

    def lower_rows(x):
        d, proj, dproj = project(x, J)
        g = proj - (d - half)
        jac = dproj.copy()
        jac[..., 1] = -1.0
        return g.reshape(-1), jac.reshape(-1, 5)

    return [
        Block("inner_upper", "separation", cols_for(I), upper_rows),
        Block("inner_lower", "separation", cols_for(J), lower_rows),
    ]
