"""Vectorized separating-axis margins of many body pairs, with gradients.

The margin of a pair is the best projection gap over the candidate axes, so
its gradient (where the maximizing axis and extreme vertices are unique) is
the gradient of that one gap.  The gap moves with both centers, with the
rotation of each body through its extreme vertex, and with the rotation(s)
that define the axis.
"""

from __future__ import annotations

import numpy as np

from .geometry import CROSS_EPS, rotation_zyx_batch, rotation_zyx_derivatives


def _best_gap(pa: np.ndarray, pb: np.ndarray, valid: np.ndarray | None = None):
    """Per pair: margin, best axis index, direction sign, extreme vertex indices.

    ``pa``/``pb`` are projections shaped ``(P, axes, verts)``.
    """
    P = pa.shape[0]
    rows = np.arange(P)
    max_a, min_a = pa.max(axis=2), pa.min(axis=2)
    max_b, min_b = pb.max(axis=2), pb.min(axis=2)
    forward = min_b - max_a
    backward = min_a - max_b
    if valid is not None:
        forward = np.where(valid, forward, -np.inf)
        backward = np.where(valid, backward, -np.inf)
    kf = forward.argmax(axis=1)
    kb = backward.argmax(axis=1)
    gf = forward[rows, kf]
    gb = backward[rows, kb]
    use_f = gf >= gb
    k = np.where(use_f, kf, kb)
    margin = np.where(use_f, gf, gb)
    sign = np.where(use_f, 1.0, -1.0)
    # forward: b's minimum minus a's maximum; backward: a's minimum minus b's maximum
    va = np.where(use_f, pa[rows, k].argmax(axis=1), pa[rows, k].argmin(axis=1))
    vb = np.where(use_f, pb[rows, k].argmin(axis=1), pb[rows, k].argmax(axis=1))
    return margin, k, sign, va, vb


def margins_2d(poses: np.ndarray, I: np.ndarray, J: np.ndarray, spec, with_grad: bool = True):
    """SAT margins of polygon pairs ``(I[p], J[p])``.

    Returns ``margin (P,)`` and, if requested, ``grad (P, 2, 3)`` holding the
    partials with respect to ``(x, y, theta)`` of body ``I[p]`` then ``J[p]``.
    """
    m = spec.m
    th = poses[:, 2]
    vang = th[:, None] + spec.delta[None, :]
    nang = th[:, None] + spec.phi * np.arange(m)[None, :]
    V = poses[:, None, :2] + np.stack([np.sin(vang), np.cos(vang)], axis=-1)
    dV = np.stack([np.cos(vang), -np.sin(vang)], axis=-1)
    N = np.stack([np.sin(nang), np.cos(nang)], axis=-1)
    dN = np.stack([np.cos(nang), -np.sin(nang)], axis=-1)

    axes = np.concatenate([N[I], N[J]], axis=1)  # (P, 2m, 2)
    pa = np.einsum("pvc,pkc->pkv", V[I], axes)
    pb = np.einsum("pvc,pkc->pkv", V[J], axes)
    margin, k, sign, va, vb = _best_gap(pa, pb)
    if not with_grad:
        return margin
    P = len(I)
    rows = np.arange(P)
    u = sign[:, None] * axes[rows, k]
    from_i = k < m
    kk = np.where(from_i, k, k - m)
    du = sign[:, None] * np.where(from_i[:, None], dN[I, kk], dN[J, kk])
    Va, Vb = V[I, va], V[J, vb]
    grad = np.zeros((P, 2, 3))
    grad[:, 0, :2] = -u
    grad[:, 1, :2] = u
    grad[:, 0, 2] = -np.einsum("pc,pc->p", dV[I, va], u)
    grad[:, 1, 2] = np.einsum("pc,pc->p", dV[J, vb], u)
    daxis = np.einsum("pc,pc->p", du, Vb - Va)
    grad[:, 0, 2] += np.where(from_i, daxis, 0.0)
    grad[:, 1, 2] += np.where(from_i, 0.0, daxis)
    return margin, grad


def margins_3d(poses: np.ndarray, I: np.ndarray, J: np.ndarray, spec, with_grad: bool = True):
    """SAT margins of solid pairs; ``grad`` is ``(P, 2, 6)`` over ``(x, y, z, theta, iota, kappa)``."""
    rot = rotation_zyx_batch(poses[:, 3:])
    drot = rotation_zyx_derivatives(poses[:, 3:])  # (n, 3 angles, 3, 3)
    V = poses[:, None, :3] + np.einsum("icd,vd->ivc", rot, spec.vertices)
    N = np.einsum("icd,fd->ifc", rot, spec.normals)
    Ed = np.einsum("icd,ed->iec", rot, spec.edge_dirs)
    F, E = len(spec.normals), len(spec.edge_dirs)

    Ea, Eb = Ed[I], Ed[J]
    cross = np.cross(Ea[:, :, None, :], Eb[:, None, :, :]).reshape(len(I), E * E, 3)
    norm = np.linalg.norm(cross, axis=2)
    ok = norm >= CROSS_EPS
    unit = cross / np.where(ok, norm, 1.0)[..., None]
    axes = np.concatenate([N[I], N[J], unit], axis=1)
    valid = np.concatenate([np.ones((len(I), 2 * F), dtype=bool), ok], axis=1)
    pa = np.einsum("pvc,pkc->pkv", V[I], axes)
    pb = np.einsum("pvc,pkc->pkv", V[J], axes)
    margin, k, sign, va, vb = _best_gap(pa, pb, valid)
    if not with_grad:
        return margin
    P = len(I)
    rows = np.arange(P)
    u = sign[:, None] * axes[rows, k]
    Va, Vb = V[I, va], V[J, vb]
    diff = Vb - Va
    dVa = np.einsum("pacd,pd->pac", drot[I], spec.vertices[va])
    dVb = np.einsum("pacd,pd->pac", drot[J], spec.vertices[vb])

    grad = np.zeros((P, 2, 6))
    grad[:, 0, :3] = -u
    grad[:, 1, :3] = u
    grad[:, 0, 3:] = -np.einsum("pac,pc->pa", dVa, u)
    grad[:, 1, 3:] = np.einsum("pac,pc->pa", dVb, u)

    # axis derivatives
    face_i = k < F
    face_j = (k >= F) & (k < 2 * F)
    edge = k >= 2 * F
    f_idx = np.where(face_i, k, np.where(face_j, k - F, 0))
    nrm = spec.normals[f_idx]
    dn_i = np.einsum("pacd,pd->pac", drot[I], nrm)
    dn_j = np.einsum("pacd,pd->pac", drot[J], nrm)
    grad[:, 0, 3:] += np.where(face_i[:, None], sign[:, None] * np.einsum("pac,pc->pa", dn_i, diff), 0.0)
    grad[:, 1, 3:] += np.where(face_j[:, None], sign[:, None] * np.einsum("pac,pc->pa", dn_j, diff), 0.0)
    if np.any(edge):
        e_idx = np.where(edge, k - 2 * F, 0)
        ea_k, eb_k = e_idx // E, e_idx % E
        ea = Ea[rows, ea_k]
        eb = Eb[rows, eb_k]
        c = cross[rows, e_idx]
        cn = np.where(edge, norm[rows, e_idx], 1.0)
        w = c / cn[:, None]
        dea = np.einsum("pacd,pd->pac", drot[I], spec.edge_dirs[ea_k])
        deb = np.einsum("pacd,pd->pac", drot[J], spec.edge_dirs[eb_k])
        dc_i = np.cross(dea, eb[:, None, :])
        dc_j = np.cross(ea[:, None, :], deb)

        def dunit(dc):
            proj = np.einsum("pac,pc->pa", dc, w)
            return (dc - proj[..., None] * w[:, None, :]) / cn[:, None, None]

        gi = sign[:, None] * np.einsum("pac,pc->pa", dunit(dc_i), diff)
        gj = sign[:, None] * np.einsum("pac,pc->pa", dunit(dc_j), diff)
        grad[:, 0, 3:] += np.where(edge[:, None], gi, 0.0)
        grad[:, 1, 3:] += np.where(edge[:, None], gj, 0.0)
    return margin, grad
