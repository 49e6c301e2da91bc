"""Platonic solids in a Platonic container of minimum circumradius."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import platonic_spec, rotation_zyx_batch, rotation_zyx_derivatives
from .base import Block, ConstraintSystem, Instance, Layout, pairs
from .bodies import cone_block, distance_block, farkas_blocks, ordering_block

TWO_PI = 2.0 * math.pi


def platonic_rmin(l, m, n: int) -> float:
    """Volume bound on the outer circumradius."""
    return (n * (platonic_spec(m).volume / platonic_spec(l).volume)) ** (1.0 / 3.0)


def sym_cone_halfplanes(l) -> np.ndarray:
    """Inward normals of the cone over half of the first sector of face 0.

    The cone is spanned by the face center direction, the first vertex of
    the face and the midpoint of its first edge.
    """
    outer = platonic_spec(l)
    face = outer.faces[0]
    v0, v1 = outer.vertices[face[0]], outer.vertices[face[1]]
    gens = [-outer.normals[0], v0, 0.5 * (v0 + v1)]
    rows = []
    for k in range(3):
        h = np.cross(gens[(k + 1) % 3], gens[(k + 2) % 3])
        h /= np.linalg.norm(h)
        if h @ gens[k] < 0:
            h = -h
        rows.append(h)
    return np.array(rows)


def build_platonic(l, m, n: int, variant: str = "dist", epsilon: float = 1e-8) -> ConstraintSystem:
    return build_platonic_instance(Instance("platonic", n=n, m=m, l=l, variant=variant, epsilon=epsilon))


def build_platonic_instance(instance: Instance) -> ConstraintSystem:
    n, eps, variant = instance.n, instance.epsilon, instance.variant
    inner, outer = platonic_spec(instance.m), platonic_spec(instance.l)
    V = inner.vertices
    Nf = inner.normals
    NL = outer.normals
    nv, F, FL = len(V), len(Nf), len(NL)
    rho_m, rho_l = inner.rho, outer.rho
    c_vert = 1.0 + eps / rho_m
    rho_sep = rho_m + eps / 2.0
    P = pairs(n)
    use_farkas = variant != "inner"

    lay = Layout()
    lay.add("R", 1, labels=["R"])
    lay.add(
        "pose", (n, 6), labels=[f"{c}[{i}]" for i in range(n) for c in ("x", "y", "z", "theta", "iota", "kappa")]
    )
    if use_farkas:
        lay.add(
            "halfspace",
            (n, 4, F),
            labels=[f"{c}[{i},{f}]" for i in range(n) for c in ("a", "b", "c", "e") for f in range(F)],
        )
        lay.add("lambda", (len(P), 2 * F), labels=[f"lambda[{i},{j},{k}]" for i, j in P for k in range(1, 2 * F + 1)])
    else:
        lay.add("sep", (len(P), 3), labels=[f"{c}[{i},{j}]" for i, j in P for c in ("alpha", "beta", "d")])
    iR = 0
    pose_ix = lay.index("pose")

    lower = np.full(lay.size, -np.inf)
    upper = np.full(lay.size, np.inf)
    r_min = platonic_rmin(instance.l, instance.m, n)
    lower[iR] = r_min
    lower[pose_ix[:, 3:]], upper[pose_ix[:, 3:]] = 0.0, TWO_PI
    if use_farkas:
        hs = lay.index("halfspace")
        lower[hs[:, :3, :]], upper[hs[:, :3, :]] = -1.0, 1.0
        lam = lay.slice("lambda")
        lower[lam] = 0.0
        upper[lam] = np.inf if variant == "farkas" else 1.0
    else:
        sep = lay.index("sep")
        lower[sep[:, 0]], upper[sep[:, 0]] = 0.0, TWO_PI
        lower[sep[:, 1]], upper[sep[:, 1]] = -math.pi / 2, math.pi / 2

    def pose(x):
        return lay.view(x, "pose")

    blocks = []

    cont_cols = np.empty((n, nv, FL, 7), dtype=int)
    cont_cols[..., 0] = iR
    cont_cols[..., 1:] = pose_ix[:, None, None, :]

    def containment(x):
        p = pose(x)
        R = x[iR]
        rot = rotation_zyx_batch(p[:, 3:])
        drot = rotation_zyx_derivatives(p[:, 3:])
        w = p[:, None, :3] + c_vert * np.einsum("icd,vd->ivc", rot, V)
        g = -(R * rho_l + np.einsum("ivc,kc->ivk", w, NL))
        dw = c_vert * np.einsum("iacd,vd->ivac", drot, V)
        jac = np.empty((n, nv, FL, 7))
        jac[..., 0] = -rho_l
        jac[..., 1:4] = -NL[None, None, :, :]
        jac[..., 4:] = -np.einsum("ivac,kc->ivka", dw, NL)
        return g.reshape(-1), jac.reshape(-1, 7)

    blocks.append(Block("containment", "containment", cont_cols.reshape(-1, 7), containment))

    if use_farkas:
        hs = lay.index("halfspace")
        for comp, name in enumerate(("normal_a", "normal_b", "normal_c")):
            cols = np.concatenate(
                [hs[:, comp, :].reshape(-1, 1), np.repeat(pose_ix[:, 3:], F, axis=0)], axis=1
            )

            def normal(x, comp=comp):
                p = pose(x)
                h = lay.view(x, "halfspace")[:, comp, :]
                rot = rotation_zyx_batch(p[:, 3:])[:, comp, :]
                drot = rotation_zyx_derivatives(p[:, 3:])[:, :, comp, :]
                g = h - rot @ Nf.T
                dn = np.einsum("iad,fd->ifa", drot, Nf)
                jac = np.concatenate([np.ones((n, F, 1)), -dn], axis=2)
                return g.reshape(-1), jac.reshape(-1, 4)

            blocks.append(Block(name, "halfspace", cols, normal, equality=True))

        off_cols = np.stack(
            [hs[:, 3, :], hs[:, 0, :], hs[:, 1, :], hs[:, 2, :]]
            + [np.repeat(pose_ix[:, k : k + 1], F, axis=1) for k in range(3)],
            axis=-1,
        ).reshape(-1, 7)

        def offset(x):
            p = pose(x)
            h = lay.view(x, "halfspace")
            a, b, c, e = h[:, 0], h[:, 1], h[:, 2], h[:, 3]
            X, Y, Z = p[:, 0:1], p[:, 1:2], p[:, 2:3]
            g = e - (((a * X + b * Y) + c * Z) - rho_sep)
            full = (n, F)
            jac = np.stack(
                [
                    np.ones(full),
                    -np.broadcast_to(X, full),
                    -np.broadcast_to(Y, full),
                    -np.broadcast_to(Z, full),
                    -a,
                    -b,
                    -c,
                ],
                axis=-1,
            )
            return g.reshape(-1), jac.reshape(-1, 7)

        blocks.append(Block("offset", "halfspace", off_cols, offset, equality=True))
        blocks += farkas_blocks(lay, P, F, 3, variant)
    else:
        blocks += _inner_blocks(lay, P, V, eps)

    if variant in ("dist", "sym") and len(P):
        blocks.append(distance_block(lay, P, 3, 2.0 * rho_m))
    if variant == "sym" and n >= 2:
        blocks.append(ordering_block(lay, n))
        blocks.append(cone_block(lay, n, 3, sym_cone_halfplanes(instance.l)))

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
        constants={"rho_m": rho_m, "rho_l": rho_l, "c_vert": c_vert, "rho_sep": rho_sep, "r_min": r_min},
    )


def separating_direction(alpha, beta):
    """Unit vector for spherical angles (azimuth ``alpha``, elevation ``beta``)."""
    cb = np.cos(beta)
    return np.stack([np.sin(alpha) * cb, np.cos(alpha) * cb, np.sin(beta) * np.ones_like(alpha)], axis=-1)


def _inner_blocks(lay, P, V, eps) -> list[Block]:
    pose_ix = lay.index("pose")
    sep_ix = lay.index("sep")
    I, J = P[:, 0], P[:, 1]
    nv = len(V)
    half = eps / 2.0

    def cols_for(E):
        c = np.concatenate([sep_ix, pose_ix[E]], axis=1)
        return np.repeat(c, nv, axis=0)

    def project(x, E):
        p = lay.view(x, "pose")[E]
        s = lay.view(x, "sep")
        al, be, d = s[:, 0], s[:, 1], s[:, 2:3]
        u = separating_direction(al, be)
        ca, sa, cb, sb = np.cos(al), np.sin(al), np.cos(be), np.sin(be)
        du_a = np.stack([ca * cb, -sa * cb, np.zeros_like(al)], axis=-1)
        du_b = np.stack([-sa * sb, -ca * sb, cb], axis=-1)
        rot = rotation_zyx_batch(p[:, 3:])
        drot = rotation_zyx_derivatives(p[:, 3:])
        w = p[:, None, :3] + np.einsum("icd,vd->ivc", rot, V)
        proj = np.einsum("ivc,ic->iv", w, u)
        dang = np.einsum("iacd,vd,ic->iva", drot, V, u)
        k = len(p)
        dproj = np.concatenate(
            [
                np.einsum("ivc,ic->iv", w, du_a)[..., None],
                np.einsum("ivc,ic->iv", w, du_b)[..., None],
                np.zeros((k, nv, 1)),
                np.broadcast_to(u[:, None, :], (k, nv, 3)),
                dang,
            ],
            axis=-1,
        )
        return d, proj, dproj

    def upper_rows(x):
        d, proj, dproj = project(x, I)
        g = (d + half) - proj
        jac = -dproj
        jac[..., 2] = 1.0
        return g.reshape(-1), jac.reshape(-1, 9)

    def lower_rows(x):
        d, proj, dproj = project(x, J)
        g = proj - (d - half)
        jac = dproj.copy()
        jac[..., 2] = -1.0
        return g.reshape(-1), jac.reshape(-1, 9)

    return [
        Block("inner_upper", "separation", cols_for(I), upper_rows),
        Block("inner_lower", "separation", cols_for(J), lower_rows),
    ]
