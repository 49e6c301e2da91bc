"""Separation and containment certificates.

Farkas certificates prove that two congruent convex bodies have disjoint
interiors: nonnegative weights on the inward facet inequalities of both bodies
whose normals cancel and whose offsets sum to a nonnegative number.  They are
built from a separating axis by two tiny LPs (support-function duals), solved
with a dense Bland-rule simplex.

S-lemma certificates prove that a circle lies in an axis-aligned ellipse via
one multiplier ``t`` that makes a 3x3 symmetric matrix positive semidefinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    PlatonicSpec,
    Pose2,
    Pose3,
    RegularPolygonSpec,
    rotation_zyx,
    sat_margin_2d,
    sat_margin_3d,
)

CANCEL_TOL = 1e-10
GAP_TOL = 1e-12
SUM_TOL = 1e-10
MINOR_TOL = 1e-12
PIVOT_TOL = 1e-12


class CertificateError(RuntimeError):
    """No certificate could be constructed for the given input."""


# ---------------------------------------------------------------- simplex


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    value: float = math.nan
    basis: list[int] = field(default_factory=list)


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _bland_loop(T: np.ndarray, basis: list[int], ncols: int, max_iter: int) -> str:
    """Maximize the objective stored (negated) in the last row of ``T``."""
    m = len(basis)
    for _ in range(max_iter):
        obj = T[-1, :ncols]
        entering = next((j for j in range(ncols) if obj[j] < -PIVOT_TOL), None)
        if entering is None:
            return "optimal"
        col = T[:m, entering]
        best, leave = math.inf, None
        for r in range(m):
            if col[r] > PIVOT_TOL:
                ratio = T[r, -1] / col[r]
                tie = leave is not None and abs(ratio - best) <= 1e-12 * max(1.0, abs(best))
                # ties go to the largest pivot; a tiny one wrecks the basis
                if (ratio < best and not tie) or (tie and (col[r], -basis[r]) > (col[leave], -basis[leave])):
                    best, leave = ratio, r
        if leave is None:
            return "unbounded"
        _pivot(T, leave, entering)
        basis[leave] = entering
    raise RuntimeError("simplex iteration limit reached")


def simplex_max(c, A_eq, b_eq, max_iter: int = 10_000) -> LPResult:
    """Maximize ``c @ x`` subject to ``A_eq @ x == b_eq`` and ``x >= 0``.

    Two-phase dense tableau simplex with Bland's anti-cycling rule.
    """
    A = np.array(A_eq, dtype=float, ndmin=2)
    b = np.array(b_eq, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificials n..n+m-1, maximize -sum(artificials)
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _bland_loop(T, basis, n + m, max_iter)
    if -T[-1, -1] > 1e-9 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return LPResult("infeasible")

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= n:
            cand = next((j for j in range(n) if abs(T[r, j]) > PIVOT_TOL), None)
            if cand is None:
                continue
            _pivot(T, r, cand)
            basis[r] = cand
        keep.append(r)
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis = [basis[r] for r in keep]
    T2[-1, :n] = -c
    for r, j in enumerate(basis):
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[r]
    status = _bland_loop(T2, basis, n, max_iter)
    if status != "optimal":
        return LPResult(status, basis=basis)
    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = T2[r, -1]
    return LPResult("optimal", x=x, value=float(c @ x), basis=basis)


# ---------------------------------------------------------------- Farkas


def body_halfspaces(pose, spec) -> tuple[np.ndarray, np.ndarray]:
    """Inward unit normals and offsets: the body is ``{X : normals @ X >= offsets}``."""
    if isinstance(spec, RegularPolygonSpec):
        normals = spec.normals(pose.theta)
    else:
        normals = spec.normals @ rotation_zyx(*pose.angles).T
    return normals, normals @ pose.center - spec.rho


@dataclass
class FarkasCertificate:
    pair: tuple[int, int]
    lambdas: np.ndarray
    axis: np.ndarray
    offset_gap: float

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "lambdas": [float(v) for v in self.lambdas],
            "axis": [float(v) for v in self.axis],
            "offset_gap": float(self.offset_gap),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FarkasCertificate":
        return cls(tuple(d["pair"]), np.array(d["lambdas"], dtype=float), np.array(d["axis"]), d["offset_gap"])


def _support_weights(normals: np.ndarray, offsets: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Weights ``w >= 0`` with ``w @ normals == target`` maximizing ``w @ offsets``."""
    res = simplex_max(offsets, normals.T, target)
    if res.status != "optimal":
        raise CertificateError(f"support LP {res.status}")
    w = np.where(res.x > 1e-13 * max(1.0, float(res.x.max(initial=0.0))), res.x, 0.0)
    # re-solve on the optimal support for a clean basic solution
    support = np.flatnonzero(w > 0.0)
    if support.size:
        sol, *_ = np.linalg.lstsq(normals[support].T, target, rcond=None)
        if np.all(sol >= 0.0):
            w = np.zeros_like(w)
            w[support] = sol
    return w


def farkas_from_axis(pose_i, pose_j, spec, axis, offset: float | None = None, pair=(0, 1)) -> FarkasCertificate:
    """Certificate for the pair from a direction ``axis`` pointing from ``i`` to ``j``.

    ``offset`` (a separating level) is accepted for reference only; the gap is
    recomputed from the LPs.  Raises ``CertificateError`` if the recovered gap
    is negative beyond tolerance.
    """
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    ni, si = body_halfspaces(pose_i, spec)
    nj, sj = body_halfspaces(pose_j, spec)
    mu = _support_weights(ni, si, -u)
    nu = _support_weights(nj, sj, u)
    gap = float(mu @ si + nu @ sj)
    if gap < -GAP_TOL:
        raise CertificateError(f"axis does not separate the pair (gap {gap:.3e})")
    total = mu.sum() + nu.sum()
    lam = np.concatenate([mu, nu]) / total
    return FarkasCertificate(tuple(int(v) for v in pair), lam, u, gap)


def farkas_residuals(lambdas, pose_i, pose_j, spec) -> tuple[float, float, float]:
    """``(sum, cancellation norm, offset sum)`` of a multiplier vector."""
    ni, si = body_halfspaces(pose_i, spec)
    nj, sj = body_halfspaces(pose_j, spec)
    F = len(si)
    lam = np.asarray(lambdas, dtype=float)
    cancel = lam[:F] @ ni + lam[F:] @ nj
    return float(lam.sum()), float(np.linalg.norm(cancel)), float(lam[:F] @ si + lam[F:] @ sj)


def farkas_check(cert: FarkasCertificate, pose_i, pose_j, spec, per_body: bool = False) -> bool:
    """Whether ``cert`` proves disjoint interiors for the given poses.

    ``per_body`` accepts the alternative normalization where each body's
    multipliers sum to at least one instead of all summing to one.
    """
    lam = np.asarray(cert.lambdas, dtype=float)
    F = lam.size // 2
    if lam.size != 2 * F or not np.all(np.isfinite(lam)) or np.any(lam < 0.0):
        return False
    total, cancel, gap = farkas_residuals(lam, pose_i, pose_j, spec)
    if per_body:
        if lam[:F].sum() < 1.0 - SUM_TOL or lam[F:].sum() < 1.0 - SUM_TOL:
            return False
        # rescale to the unit simplex before the absolute tolerances apply
        cancel, gap = cancel / total, gap / total
    elif abs(total - 1.0) > SUM_TOL:
        return False
    return cancel <= CANCEL_TOL and gap >= -GAP_TOL


def sat_margin(pose_i, pose_j, spec):
    if isinstance(spec, RegularPolygonSpec):
        return sat_margin_2d(pose_i, pose_j, spec)
    return sat_margin_3d(pose_i, pose_j, spec)


def certify_pair(pose_i, pose_j, spec, pair=(0, 1)) -> FarkasCertificate:
    """SAT-optimal axis followed by ``farkas_from_axis``."""
    margin, axis = sat_margin(pose_i, pose_j, spec)
    return farkas_from_axis(pose_i, pose_j, spec, axis, margin, pair=pair)


def positive_support(cert: FarkasCertificate, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    F = cert.lambdas.size // 2
    return np.flatnonzero(cert.lambdas[:F] > tol), np.flatnonzero(cert.lambdas[F:] > tol)


def is_sparse(cert: FarkasCertificate, spec) -> bool:
    """At most two adjacent positive edges per polygon, three faces per solid."""
    for idx in positive_support(cert):
        if isinstance(spec, RegularPolygonSpec):
            if idx.size > 2:
                return False
            if idx.size == 2 and (idx[1] - idx[0]) % spec.m not in (1, spec.m - 1):
                return False
        elif idx.size > 3:
            return False
    return True


# ---------------------------------------------------------------- S-lemma


@dataclass
class SLemmaCertificate:
    index: int
    t: float
    minors: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"index": self.index, "t": float(self.t), "minors": [float(v) for v in self.minors]}

    @classmethod
    def from_dict(cls, d: dict) -> "SLemmaCertificate":
        return cls(int(d["index"]), float(d["t"]), tuple(d["minors"]))


def slemma_terms(t, a, b, x0, y0, r) -> tuple[float, float, float, float, float]:
    """``A, B, C, D, E`` of the quadratic that must be nonnegative."""
    A = t - b * b
    B = -t * x0
    C = t - a * a
    D = -t * y0
    E = a * a * (b * b) + t * ((x0 * x0 + y0 * y0) - r * r)
    return A, B, C, D, E


def slemma_minors(t, a, b, x0, y0, r) -> tuple[float, float, float, float, float]:
    """The five principal-minor values checked by the model."""
    A, B, C, D, E = slemma_terms(t, a, b, x0, y0, r)
    B2, D2 = B * B, D * D
    return (C, E, C * E - D2, A * E - B2, (A * C) * E - (A * D2 + C * B2))


def _sixth_minor_poly(a, b, x0, y0, r) -> np.polynomial.Polynomial:
    Poly = np.polynomial.Polynomial
    a2, b2 = a * a, b * b
    q = x0 * x0 + y0 * y0 - r * r
    A, C, E = Poly([-b2, 1.0]), Poly([-a2, 1.0]), Poly([a2 * b2, q])
    t2 = Poly([0.0, 0.0, 1.0])
    return A * C * E - A * t2 * (y0 * y0) - C * t2 * (x0 * x0)


def best_multiplier(a, b, x0, y0, r) -> float:
    """``t >= max(a^2, b^2)`` maximizing the determinant minor.

    The determinant is a cubic in ``t`` with negative leading coefficient, so
    its maximum over a half-line is at the left end or at the larger critical
    point.
    """
    t0 = max(a * a, b * b)
    poly = _sixth_minor_poly(a, b, x0, y0, r)
    cands = [t0]
    for root in poly.deriv().roots():
        if abs(root.imag) <= 1e-12 * max(1.0, abs(root.real)) and root.real > t0:
            cands.append(_newton_polish(poly, float(root.real)))
    vals = [poly(t) for t in cands]
    return float(cands[int(np.argmax(vals))])


def _newton_polish(poly, t: float) -> float:
    d1, d2 = poly.deriv(), poly.deriv(2)
    for _ in range(8):
        h = d2(t)
        if h == 0.0:
            break
        step = d1(t) / h
        t -= step
        if abs(step) <= 1e-15 * max(1.0, abs(t)):
            break
    return t


def slemma_contains(a, b, x0, y0, r, tol: float = MINOR_TOL, index: int = 0) -> SLemmaCertificate | None:
    """Certificate that the circle ``((x0, y0), r)`` lies in the ellipse, or ``None``."""
    t = best_multiplier(a, b, x0, y0, r)
    minors = slemma_minors(t, a, b, x0, y0, r)
    if min(minors) < -tol:
        return None
    return SLemmaCertificate(index, t, tuple(float(v) for v in minors))


def slemma_check(cert: SLemmaCertificate, a, b, x0, y0, r, tol: float = MINOR_TOL) -> bool:
    t = cert.t
    if not math.isfinite(t) or t - b * b < -tol:
        return False
    return min(slemma_minors(t, a, b, x0, y0, r)) >= -tol


def slemma_residual(a, b, x0, y0, r) -> tuple[float, float]:
    """``(t*, -min minor)`` at the best multiplier; contained iff the residual <= 0."""
    t = best_multiplier(a, b, x0, y0, r)
    return t, -min(slemma_minors(t, a, b, x0, y0, r))


# ---------------------------------------------------------------- solutions


def body_poses(instance, x) -> list:
    from .models import build_system

    sys = build_system(instance)
    p = sys.layout.view(np.asarray(x, dtype=float), "pose")
    if instance.family == "polygon":
        return [Pose2(*row) for row in p]
    return [Pose3(*row) for row in p]


def inner_spec(instance):
    from .geometry import platonic_spec, polygon_constants

    return polygon_constants(instance.m) if instance.family == "polygon" else platonic_spec(instance.m)


def farkas_certificates(instance, x) -> list[FarkasCertificate]:
    """One certificate per pair ``i < j``; raises ``CertificateError`` on overlap."""
    from .models import pairs

    poses = body_poses(instance, x)
    spec = inner_spec(instance)
    return [certify_pair(poses[i], poses[j], spec, pair=(i, j)) for i, j in pairs(instance.n)]


def ellipse_certificates(instance, x, tol: float = MINOR_TOL) -> list[SLemmaCertificate | None]:
    from .models import build_system

    sys = build_system(instance)
    x = np.asarray(x, dtype=float)
    a, b = sys.layout.view(x, "axes")
    p = sys.layout.view(x, "pose")
    return [slemma_contains(a, b, px, py, 1.0, tol=tol, index=i) for i, (px, py) in enumerate(p)]


__all__ = [
    "CertificateError",
    "FarkasCertificate",
    "LPResult",
    "PlatonicSpec",
    "SLemmaCertificate",
    "best_multiplier",
    "body_halfspaces",
    "certify_pair",
    "ellipse_certificates",
    "farkas_certificates",
    "farkas_check",
    "farkas_from_axis",
    "farkas_residuals",
    "is_sparse",
    "simplex_max",
    "slemma_check",
    "slemma_contains",
    "slemma_minors",
    "slemma_residual",
]
