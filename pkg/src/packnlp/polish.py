"""Feasibility restoration in high precision.

Solver output satisfies the epsilon-inflated constraints only up to a
tolerance.  Polishing removes that slack with a single scalar per family so
that the result passes :func:`packnlp.verify.verify` at tolerance zero:

* bodies: centers are scaled about the origin by the smallest factor that
  separates every pair along a fixed axis, then the container size is
  recomputed from the vertices;
* circles in a box: all radii grow by the largest uniform amount, then each
  radius (smallest first) takes up its own remaining slack;
* circles in an ellipse: centers are scaled to make every pair touch at
  most, then both semi-axes are scaled by the smallest containing factor.

Quantities are evaluated with 256-bit binary floats and rounded outward when
converted back to doubles.  The double-precision verifier is the arbiter: if
it rejects a result, the safety margin is multiplied by ten and the step
repeated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .geometry import platonic_spec, polygon_constants, rotation_zyx_batch
from .models import build_system, pairs
from .models.base import Instance, Solution
from .verify import verify

PRECISION = 256
BODY_MARGIN = 1e-14
CIRCLE_MARGIN = 1e-15
SIGMA_LIMIT = 2.0
MAX_ESCALATIONS = 6
AXIS_CANDIDATES = 3


class PolishRejectedError(RuntimeError):
    """The input is too far from feasible to be polished."""


@dataclass
class PolishReport:
    family: str
    objective_before: float
    objective_after: float = math.nan
    sigma: float | None = None
    delta: float | None = None
    kappa: float | None = None
    increments: list[float] = field(default_factory=list)
    margin: float = 0.0
    escalations: int = 0
    feasible: bool = False
    worst_residual: float = math.nan


def _ctx():
    return gmpy2.context(precision=PRECISION)


def to_double_up(v) -> float:
    f = float(v)
    return math.nextafter(f, math.inf) if mpfr(f) < v else f


def to_double_down(v) -> float:
    f = float(v)
    return math.nextafter(f, -math.inf) if mpfr(f) > v else f


def _dot(u, w):
    acc = mpfr(0)
    for a, b in zip(u, w):
        acc += a * b
    return acc


# ---------------------------------------------------------------- bodies


class _BodyGeometry:
    """High-precision rotated vertex offsets, normals and edge directions."""

    def __init__(self, instance: Instance, poses: np.ndarray):
        self.planar = instance.family == "polygon"
        if self.planar:
            spec = polygon_constants(instance.m)
            self.spec = spec
            self.rot = []
            for row in poses:
                th = mpfr(float(row[2]))
                verts = [(gmpy2.sin(th + mpfr(float(d))), gmpy2.cos(th + mpfr(float(d)))) for d in spec.delta]
                normals = [
                    (gmpy2.sin(th + mpfr(float(k * spec.phi))), gmpy2.cos(th + mpfr(float(k * spec.phi))))
                    for k in range(spec.m)
                ]
                self.rot.append((verts, normals, []))
        else:
            spec = platonic_spec(instance.m)
            self.spec = spec
            self.rot = []
            for row in poses:
                R = _rotation_mp(*[float(v) for v in row[3:]])
                verts = [_matvec(R, v) for v in spec.vertices]
                normals = [_matvec(R, v) for v in spec.normals]
                edges = [_matvec(R, v) for v in spec.edge_dirs]
                self.rot.append((verts, normals, edges))

    def axis(self, i: int, j: int, k: int):
        """Candidate axis ``k`` of pair ``(i, j)`` in the ordering used by ``satpen``."""
        F = len(self.rot[i][1])
        if k < F:
            return self.rot[i][1][k]
        if k < 2 * F:
            return self.rot[j][1][k - F]
        E = len(self.rot[i][2])
        p, q = divmod(k - 2 * F, E)
        a, b = self.rot[i][2][p], self.rot[j][2][q]
        return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _rotation_mp(t, i, k):
    t, i, k = mpfr(t), mpfr(i), mpfr(k)
    ct, st, ci, si, ck, sk = gmpy2.cos(t), gmpy2.sin(t), gmpy2.cos(i), gmpy2.sin(i), gmpy2.cos(k), gmpy2.sin(k)
    return (
        (ct * ci, ct * si * sk - st * ck, ct * si * ck + st * sk),
        (st * ci, st * si * sk + ct * ck, st * si * ck - ct * sk),
        (-si, ci * sk, ci * ck),
    )


def _matvec(R, v):
    return tuple(_dot(row, [mpfr(float(c)) for c in v]) for row in R)


def _pair_axis_candidates(instance, poses, I, J):
    """Per pair, the few (axis, orientation) choices with the smallest double-precision scale."""
    if instance.family == "polygon":
        spec = polygon_constants(instance.m)
        th = poses[:, 2]
        vang = th[:, None] + spec.delta[None, :]
        nang = th[:, None] + spec.phi * np.arange(spec.m)[None, :]
        W = np.stack([np.sin(vang), np.cos(vang)], axis=-1)
        N = np.stack([np.sin(nang), np.cos(nang)], axis=-1)
        axes = np.concatenate([N[I], N[J]], axis=1)
        valid = np.ones(axes.shape[:2], dtype=bool)
        C = poses[:, :2]
    else:
        spec = platonic_spec(instance.m)
        rot = rotation_zyx_batch(poses[:, 3:])
        W = np.einsum("icd,vd->ivc", rot, spec.vertices)
        N = np.einsum("icd,fd->ifc", rot, spec.normals)
        Ed = np.einsum("icd,ed->iec", rot, spec.edge_dirs)
        E = len(spec.edge_dirs)
        cross = np.cross(Ed[I][:, :, None, :], Ed[J][:, None, :, :]).reshape(len(I), E * E, 3)
        norm = np.linalg.norm(cross, axis=2)
        valid = np.concatenate([np.ones((len(I), 2 * len(spec.normals)), dtype=bool), norm >= 1e-12], axis=1)
        axes = np.concatenate([N[I], N[J], cross / np.maximum(norm, 1e-300)[..., None]], axis=1)
        C = poses[:, :3]
    pa = np.einsum("pvc,pkc->pkv", W[I], axes)
    pb = np.einsum("pvc,pkc->pkv", W[J], axes)
    d = np.einsum("pc,pkc->pk", C[J] - C[I], axes)
    k_pos = pb.min(axis=2) - pa.max(axis=2)
    k_neg = pa.min(axis=2) - pb.max(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_pos = np.where((d > 0) & valid, -k_pos / d, np.inf)
        s_neg = np.where((d < 0) & valid, k_neg / d, np.inf)
    both = np.concatenate([s_pos, s_neg], axis=1)
    order = np.argsort(both, axis=1)[:, :AXIS_CANDIDATES]
    nax = axes.shape[1]
    return [[(int(c % nax), 1 if c < nax else -1) for c in row if np.isfinite(both[p, c])] for p, row in enumerate(order)]


def _pair_scale(geo: _BodyGeometry, centers, i, j, candidates):
    """Exact-ish smallest center scale separating ``i`` and ``j`` along the candidate axes."""
    best = None
    Wi, Wj = geo.rot[i][0], geo.rot[j][0]
    diff = [centers[j][c] - centers[i][c] for c in range(len(centers[i]))]
    for k, sgn in candidates:
        u = geo.axis(i, j, k)
        if sgn < 0:
            u = tuple(-c for c in u)
        d = _dot(u, diff)
        if d <= 0:
            continue
        kgap = min(_dot(u, w) for w in Wj) - max(_dot(u, w) for w in Wi)
        s = -kgap / d
        if best is None or s < best:
            best = s
    return best


def polish_bodies(instance: Instance, sol: Solution, margin: float = BODY_MARGIN) -> tuple[Solution, PolishReport]:
    from .solver import fill_auxiliary

    sys = build_system(instance)
    x = np.asarray(sol.x, dtype=float).copy()
    lay = sys.layout
    poses = lay.view(x, "pose").copy()
    n = instance.n
    dim = 2 if instance.family == "polygon" else 3
    report = PolishReport(instance.family, objective_before=float(x[0]))
    P = pairs(n)
    R_in = float(x[0])

    with _ctx():
        geo = _BodyGeometry(instance, poses)
        centers = [tuple(mpfr(float(v)) for v in row[:dim]) for row in poses]
        sigma_star = mpfr(0)
        if len(P):
            cands = _pair_axis_candidates(instance, poses, P[:, 0], P[:, 1])
            for (i, j), cand in zip(P, cands):
                s = _pair_scale(geo, centers, int(i), int(j), cand)
                if s is None:
                    raise PolishRejectedError(f"no separating axis candidate for pair ({i}, {j})")
                sigma_star = max(sigma_star, s)
        floor = _containment_floor(instance, poses, R_in)
        if sigma_star > SIGMA_LIMIT:
            raise PolishRejectedError(f"center scale {float(sigma_star):.6g} exceeds {SIGMA_LIMIT}")

        for attempt in range(MAX_ESCALATIONS + 1):
            sigma = max(sigma_star * (1 + mpfr(margin)), mpfr(floor))
            new_centers = [[to_double_up(sigma * c) if c >= 0 else -to_double_up(-sigma * c) for c in row] for row in centers]
            poses_out = poses.copy()
            poses_out[:, :dim] = np.array(new_centers)
            R = _container_radius(instance, geo, poses_out[:, :dim]) * (1 + mpfr(margin))
            x_out = x.copy()
            x_out[lay.slice("pose")] = poses_out.reshape(-1)
            x_out[0] = max(to_double_up(R), sys.lower[0])
            fill_auxiliary(instance, sys, x_out)
            out = Solution(instance, x_out, float(x_out[0]), dict(sol.meta), None)
            rep = verify(instance, out)
            if rep.feasible:
                break
            margin *= 10.0
            report.escalations += 1
        else:
            raise PolishRejectedError("verification failed after margin escalation")

    out.meta["polished"] = True
    report.sigma = to_double_up(sigma)
    report.margin = margin
    report.objective_after = out.objective
    report.feasible = True
    report.worst_residual = rep.worst_residual
    return out, report


def _outer(instance):
    if instance.family == "polygon":
        o = polygon_constants(instance.l)
        return o.normals(), o.rho
    o = platonic_spec(instance.l)
    return o.normals, o.rho


def _containment_floor(instance, poses, R) -> float:
    """Smallest center scale keeping every vertex inside the container of size ``R``."""
    normals, rho = _outer(instance)
    if instance.family == "polygon":
        spec = polygon_constants(instance.m)
        ang = poses[:, 2:3] + spec.delta[None, :]
        W = np.stack([np.sin(ang), np.cos(ang)], axis=-1)
        C = poses[:, :2]
    else:
        spec = platonic_spec(instance.m)
        W = np.einsum("icd,vd->ivc", rotation_zyx_batch(poses[:, 3:]), spec.vertices)
        C = poses[:, :3]
    nc = C @ normals.T  # (n, F)
    nw = W @ normals.T  # (n, V, F)
    rhs = -(nw + R * rho)  # need sigma * nc >= rhs
    nc_b = np.broadcast_to(nc[:, None, :], rhs.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        lows = np.where(nc_b > 0, rhs / nc_b, -np.inf)
    return float(max(0.0, lows.max(initial=0.0)))


def _container_radius(instance, geo: _BodyGeometry, centers: np.ndarray):
    """Smallest container circumradius holding every vertex, in high precision."""
    normals, rho = _outer(instance)
    verts_d = []
    for i, c in enumerate(centers):
        W = np.array([[float(v) for v in w] for w in geo.rot[i][0]])
        verts_d.append(c + W)
    vals = -(np.array(verts_d) @ normals.T) / rho  # (n, V, F)
    top = vals.max()
    idx = np.argwhere(vals >= top - 1e-9 * max(1.0, abs(top)))
    best = mpfr("-inf")
    rho_mp = mpfr(float(rho))
    for i, v, k in idx:
        N = [mpfr(float(c)) for c in normals[k]]
        point = [mpfr(float(centers[i][c])) + geo.rot[i][0][v][c] for c in range(len(N))]
        best = max(best, -_dot(N, point) / rho_mp)
    return best


# ---------------------------------------------------------------- circles


def _circle_data(sys, x):
    lay = sys.layout
    inst = sys.instance
    alpha = float(x[lay.slice("alpha")][0]) if inst.family == "circle_rect" else 1.0
    p = lay.view(x, "pose")
    r = lay.view(x, "r").copy()
    return alpha, p, r


def _circle_slacks(i, px, py, r, alpha_mp, height_mp, dists, exclude_self=True):
    xi, yi = px[i], py[i]
    walls = min(xi - r[i], alpha_mp - xi - r[i], yi - r[i], height_mp - yi - r[i])
    pair = None
    for j in range(len(r)):
        if j == i:
            continue
        s = dists[min(i, j)][max(i, j)] - r[i] - r[j]
        pair = s if pair is None or s < pair else pair
    return walls, pair


def polish_circles(instance: Instance, sol: Solution, margin: float = CIRCLE_MARGIN) -> tuple[Solution, PolishReport]:
    sys = build_system(instance)
    x = np.asarray(sol.x, dtype=float).copy()
    alpha, p, r0 = _circle_data(sys, x)
    n = instance.n
    before = float(np.sum(r0))
    report = PolishReport(instance.family, objective_before=before)

    for attempt in range(MAX_ESCALATIONS + 1):
        with _ctx():
            m = mpfr(margin)
            px = [mpfr(float(v)) for v in p[:, 0]]
            py = [mpfr(float(v)) for v in p[:, 1]]
            r = [mpfr(float(v)) for v in r0]
            a_mp = mpfr(alpha)
            h_mp = mpfr(2) - a_mp
            dists = [[None] * n for _ in range(n)]
            for i in range(n):
                for j in range(i + 1, n):
                    dists[i][j] = gmpy2.sqrt((px[i] - px[j]) ** 2 + (py[i] - py[j]) ** 2)
            delta = None
            for i in range(n):
                walls, pair = _circle_slacks(i, px, py, r, a_mp, h_mp, dists)
                cand = walls if pair is None else min(walls, pair / 2)
                delta = cand if delta is None or cand < delta else delta
            if delta < 0:
                raise PolishRejectedError(f"circles overlap or leave the box (uniform slack {float(delta):.3e})")
            delta_d = max(0.0, to_double_down(delta - m))
            r = [to_double_down(ri + mpfr(delta_d)) for ri in r]
            # phase 2: smallest radius first, ties by index
            order = sorted(range(n), key=lambda i: (r[i], i))
            incs = [0.0] * n
            for i in order:
                rm = [mpfr(v) for v in r]
                walls, pair = _circle_slacks(i, px, py, rm, a_mp, h_mp, dists)
                slack = walls if pair is None else min(walls, pair)
                grow = slack - m
                if grow > 0:
                    new = to_double_down(rm[i] + grow)
                    if new > r[i]:
                        incs[i] = new - r[i]
                        r[i] = new
        x_out = x.copy()
        x_out[sys.layout.slice("r")] = r
        out = Solution(instance, x_out, float(sys.objective(x_out)[0]), dict(sol.meta), None)
        rep = verify(instance, out)
        if rep.feasible and out.objective >= before:
            break
        margin *= 10.0
        report.escalations += 1
    else:
        raise PolishRejectedError("verification failed after margin escalation")

    out.meta["polished"] = True
    report.delta = delta_d
    report.increments = incs
    report.margin = margin
    report.objective_after = out.objective
    report.feasible = True
    report.worst_residual = rep.worst_residual
    return out, report


# ---------------------------------------------------------------- ellipse


def _poly_mul(p, q):
    out = [mpfr(0)] * (len(p) + len(q) - 1)
    for i, u in enumerate(p):
        for j, v in enumerate(q):
            out[i + j] += u * v
    return out


def _poly_eval(p, t):
    acc = mpfr(0)
    for c in reversed(p):
        acc = acc * t + c
    return acc


def _best_multiplier_mp(a, b, x0, y0, r):
    """High-precision maximizer of the determinant minor over ``t >= max(a^2, b^2)``.

    Near tangency the feasible ``t`` window is about ``a - 1`` wide, below what
    double-precision roots of the cubic's derivative resolve.
    """
    a2, b2 = a * a, b * b
    q = x0 * x0 + y0 * y0 - r * r
    AC = _poly_mul([-b2, mpfr(1)], [-a2, mpfr(1)])
    det = _poly_mul(AC, [a2 * b2, q])
    det[2] -= y0 * y0 * (-b2) + x0 * x0 * (-a2)
    det[3] -= y0 * y0 + x0 * x0
    t0 = max(a2, b2)
    cands = [t0]
    c1, c2, c3 = det[1], 2 * det[2], 3 * det[3]
    if c3 != 0:
        disc = c2 * c2 - 4 * c3 * c1
        if disc >= 0:
            s = gmpy2.sqrt(disc)
            cands += [(-c2 + s) / (2 * c3), (-c2 - s) / (2 * c3)]
    elif c2 != 0:
        cands.append(-c1 / c2)
    cands = [t for t in cands if t >= t0]
    return max(cands, key=lambda t: _poly_eval(det, t))


def _ellipse_contains_mp(a, b, x0, y0, r) -> bool:
    """S-lemma containment with all arithmetic in high precision."""
    t = _best_multiplier_mp(a, b, x0, y0, r)
    A = t - b * b
    C = t - a * a
    E = a * a * (b * b) + t * (x0 * x0 + y0 * y0 - r * r)
    B2 = (t * x0) ** 2
    D2 = (t * y0) ** 2
    minors = (C, E, C * E - D2, A * E - B2, A * C * E - A * D2 - C * B2)
    return all(v >= 0 for v in minors)


def polish_ellipse(instance: Instance, sol: Solution, margin: float = BODY_MARGIN) -> tuple[Solution, PolishReport]:
    from .solver import complete_ellipse_multipliers

    sys = build_system(instance)
    x = np.asarray(sol.x, dtype=float).copy()
    lay = sys.layout
    a0, b0 = (float(v) for v in lay.view(x, "axes"))
    p = lay.view(x, "pose").copy()
    n = instance.n
    report = PolishReport(instance.family, objective_before=float(sys.objective(x)[0]))
    P = pairs(n)

    with _ctx():
        sigma_star = mpfr(0)
        for i, j in P:
            d = gmpy2.sqrt((mpfr(float(p[i, 0])) - float(p[j, 0])) ** 2 + (mpfr(float(p[i, 1])) - float(p[j, 1])) ** 2)
            if d == 0:
                raise PolishRejectedError(f"circles {i} and {j} share a center")
            sigma_star = max(sigma_star, 2 / d)
        if sigma_star > SIGMA_LIMIT:
            raise PolishRejectedError(f"center scale {float(sigma_star):.6g} exceeds {SIGMA_LIMIT}")

        for attempt in range(MAX_ESCALATIONS + 1):
            m = mpfr(margin)
            sigma = sigma_star * (1 + m)
            pc = np.array([[_scale_away(sigma, v) for v in row] for row in p])
            kappa = _min_axis_scale(a0, b0, pc) * (1 + m)
            a, b = to_double_up(kappa * a0), to_double_up(kappa * b0)
            x_out = x.copy()
            x_out[lay.slice("pose")] = pc.reshape(-1)
            x_out[0], x_out[1] = max(a, b), min(a, b)
            complete_ellipse_multipliers(sys, x_out)
            out = Solution(instance, x_out, float(sys.objective(x_out)[0]), dict(sol.meta), None)
            rep = verify(instance, out)
            if rep.feasible:
                break
            margin *= 10.0
            report.escalations += 1
        else:
            raise PolishRejectedError("verification failed after margin escalation")

    out.meta["polished"] = True
    report.sigma = to_double_up(sigma)
    report.kappa = to_double_up(kappa)
    report.margin = margin
    report.objective_after = out.objective
    report.feasible = True
    report.worst_residual = rep.worst_residual
    return out, report


def _scale_away(sigma, v: float) -> float:
    """``sigma * v`` rounded away from zero."""
    if v >= 0:
        return to_double_up(sigma * v)
    return -to_double_up(sigma * -v)


def _min_axis_scale(a: float, b: float, centers: np.ndarray):
    """Smallest ``k`` such that the ellipse ``(k a, k b)`` holds every unit circle (bisection)."""
    a_mp, b_mp = mpfr(a), mpfr(b)

    def ok(k):
        return all(_ellipse_contains_mp(k * a_mp, k * b_mp, mpfr(float(cx)), mpfr(float(cy)), mpfr(1)) for cx, cy in centers)

    lo, hi = mpfr(0), mpfr(1)
    while not ok(hi):
        lo, hi = hi, hi * 2
        if hi > 64:
            raise PolishRejectedError("no containing ellipse scale found")
    for _ in range(120):
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------- dispatch


def polish(instance: Instance, sol: Solution) -> tuple[Solution, PolishReport]:
    """Polish any family; rejects inputs with constraint violation above 1e-6."""
    from .solver import normalized_violation

    sys = build_system(instance)
    viol = normalized_violation(sys, np.asarray(sol.x, dtype=float))
    if viol > 1e-6:
        raise PolishRejectedError(f"input violation {viol:.3e} exceeds 1e-6")
    if instance.is_circle:
        return polish_circles(instance, sol)
    if instance.family == "circle_ellipse":
        return polish_ellipse(instance, sol)
    return polish_bodies(instance, sol)
