"""Blocks shared by the polygon and Platonic formulations."""

from __future__ import annotations

import numpy as np

from .base import Block, left_sum


def farkas_blocks(lay, P: np.ndarray, nfaces: int, dim: int, variant: str) -> list[Block]:
    """Farkas separation rows for every pair.

    Expects layout blocks ``halfspace`` shaped ``(n, dim + 1, nfaces)``
    (normal components, then offset) and ``lambda`` shaped ``(P, 2 * nfaces)``.
    """
    hs_ix = lay.index("halfspace")
    lam_ix = lay.index("lambda")
    I, J = P[:, 0], P[:, 1]
    F = nfaces
    blocks = []

    if variant == "farkas":
        cols = np.empty((2 * len(P), F), dtype=int)
        cols[0::2] = lam_ix[:, :F]
        cols[1::2] = lam_ix[:, F:]

        def norm_rows(x):
            lam = lay.view(x, "lambda")
            g = np.stack([1.0 - left_sum(lam[:, :F].T), 1.0 - left_sum(lam[:, F:].T)], axis=1)
            return g.reshape(-1), -np.ones((2 * len(P), F))

        blocks.append(Block("farkas_norm", "farkas_sum", cols, norm_rows))
    else:

        def sum_rows(x):
            lam = lay.view(x, "lambda")
            return left_sum(lam.T) - 1.0, np.ones((len(P), 2 * F))

        blocks.append(Block("farkas_sum", "farkas_sum", lam_ix.copy(), sum_rows, equality=True))

    def combo(x, comp):
        lam = lay.view(x, "lambda")
        h = lay.view(x, "halfspace")[:, comp, :]
        hi, hj = h[I], h[J]
        terms = [lam[:, k] * hi[:, k] for k in range(F)] + [lam[:, F + k] * hj[:, k] for k in range(F)]
        jac = np.concatenate([hi, hj, lam[:, :F], lam[:, F:]], axis=1)
        return left_sum(terms), jac

    for comp in range(dim):
        cols = np.concatenate([lam_ix, hs_ix[I, comp, :], hs_ix[J, comp, :]], axis=1)

        def cancel(x, comp=comp):
            return combo(x, comp)

        blocks.append(Block(f"farkas_normal_{'xyz'[comp]}", "separation", cols, cancel, equality=True))

    sep_cols = np.concatenate([lam_ix, hs_ix[I, dim, :], hs_ix[J, dim, :]], axis=1)

    def gap(x):
        v, j = combo(x, dim)
        return -v, -j

    blocks.append(Block("farkas_gap", "separation", sep_cols, gap))
    return blocks


def distance_block(lay, P: np.ndarray, dim: int, min_dist: float) -> Block:
    pose_ix = lay.index("pose")
    I, J = P[:, 0], P[:, 1]
    cols = np.concatenate([pose_ix[I, :dim], pose_ix[J, :dim]], axis=1)
    d2 = min_dist * min_dist

    def dist(x):
        c = lay.view(x, "pose")[:, :dim]
        diff = c[I] - c[J]
        sq = left_sum(diff[:, k] * diff[:, k] for k in range(dim))
        return d2 - sq, np.concatenate([-2 * diff, 2 * diff], axis=1)

    return Block("distance", "distance", cols, dist)


def ordering_block(lay, n: int) -> Block:
    pose_ix = lay.index("pose")
    cols = np.stack([pose_ix[:-1, 0], pose_ix[1:, 0]], axis=1)

    def order(x):
        px = lay.view(x, "pose")[:, 0]
        return px[:-1] - px[1:], np.tile([1.0, -1.0], (n - 1, 1))

    return Block("sort_x", "symmetry", cols, order)


def cone_block(lay, n: int, dim: int, halfplanes: np.ndarray) -> Block:
    """Rows ``h . sum_i c_i >= 0`` for each row ``h`` of ``halfplanes``."""
    pose_ix = lay.index("pose")
    cols = np.tile(pose_ix[:, :dim].T.reshape(1, -1), (len(halfplanes), 1))

    def cone(x):
        c = lay.view(x, "pose")[:, :dim]
        sums = [left_sum(c[:, k]) for k in range(dim)]
        g = np.array([-left_sum(h[k] * sums[k] for k in range(dim)) for h in halfplanes])
        jac = -np.repeat(halfplanes, n, axis=1)
        return g, jac

    return Block("centroid_cone", "symmetry", cols, cone)
