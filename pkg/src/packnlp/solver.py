"""Multistart augmented-Lagrangian local search.

Each local solve minimizes the augmented Lagrangian of the built system with
L-BFGS-B over the variable bounds, updating multipliers between inner solves.
In ``sat_penalty`` mode the pairwise Farkas block of body families is
replaced by one separating-axis margin row per pair over the reduced
variables (container size and poses); halfspace variables and multipliers
are filled in afterwards from the certificates.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .certify import CertificateError, _support_weights, best_multiplier, body_halfspaces
from .geometry import Pose2, Pose3, platonic_spec, polygon_constants
from .models import build_system, pairs
from .models.base import ConstraintSystem, Instance, Solution
from .models.circle import ALPHA_MIN
from .satpen import margins_2d, margins_3d

log = logging.getLogger(__name__)

MODES = ("faithful", "sat_penalty")
THREADS_ENV = "PACKNLP_THREADS"
RHO_CAP = 1e12


@dataclass(frozen=True)
class SolverConfig:
    restarts: int = 10
    time_budget: float = 60.0
    seed: int = 0
    kkt_tol: float = 1e-9
    max_inner_iters: int = 500
    mode: str = "faithful"
    feas_tol: float = 1e-9
    max_outer: int = 40
    rho0: float = 10.0
    target: float | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.time_budget > 0:
            raise ValueError("time_budget must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class SolveReport:
    best: Solution | None
    incumbents: list[tuple[int, float]] = field(default_factory=list)
    restarts_completed: int = 0
    reason: str = ""
    elapsed: float = 0.0
    feasible_restarts: int = 0


# ---------------------------------------------------------------- starts


def _uniform_in_polygon(rng, l: int, radius: float, count: int) -> np.ndarray:
    spec = polygon_constants(l)
    normals = spec.normals()
    out = np.empty((count, 2))
    k = 0
    while k < count:
        p = rng.uniform(-radius, radius, 2)
        if np.all(normals @ p >= -radius * spec.rho):
            out[k] = p
            k += 1
    return out


def _uniform_in_solid(rng, kind, radius: float, count: int) -> np.ndarray:
    spec = platonic_spec(kind)
    out = np.empty((count, 3))
    k = 0
    while k < count:
        p = rng.uniform(-radius, radius, 3)
        if np.all(spec.normals @ p >= -radius * spec.rho):
            out[k] = p
            k += 1
    return out


def sample_start(instance: Instance, rng: np.random.Generator, sys: ConstraintSystem | None = None) -> np.ndarray:
    """Random start vector within the variable bounds."""
    sys = sys or build_system(instance)
    lay = sys.layout
    x = np.zeros(sys.n_vars)
    n = instance.n
    fam = instance.family

    if instance.is_circle:
        if fam == "circle_rect":
            alpha = rng.uniform(ALPHA_MIN, 1.0)
            x[lay.slice("alpha")] = alpha
        else:
            alpha = sys.constants["alpha"]
        height = 2.0 - alpha
        p = lay.view(x, "pose")
        p[:, 0] = rng.uniform(0.0, alpha, n)
        p[:, 1] = rng.uniform(0.0, height, n)
        rmax = min(alpha, height) / 2.0
        # uniform on (0, rmax]
        x[lay.slice("r")] = rmax * (1.0 - rng.uniform(0.0, 1.0, n))
    elif fam == "circle_ellipse":
        lo_a, hi_a = sys.lower[0], sys.upper[0]
        a = rng.uniform(lo_a, hi_a)
        b = rng.uniform(max(1.0, min(a, n / a)), a)
        x[0], x[1] = a, b
        p = lay.view(x, "pose")
        # uniform inside the ellipse shrunk by one unit
        ea, eb = max(a - 1.0, 1e-3), max(b - 1.0, 1e-3)
        k = 0
        while k < n:
            q = rng.uniform(-1.0, 1.0, 2)
            if q @ q <= 1.0:
                p[k] = (ea * q[0], eb * q[1])
                k += 1
        x[lay.slice("t")] = max(a * a, b * b) + 1.0
    else:
        r0 = 2.0 * sys.constants["r_min"]
        x[0] = r0
        p = lay.view(x, "pose")
        if fam == "polygon":
            p[:, :2] = _uniform_in_polygon(rng, instance.l, r0, n)
            p[:, 2] = rng.uniform(sys.lower[lay.index("pose")[0, 2]], sys.upper[lay.index("pose")[0, 2]], n)
        else:
            p[:, :3] = _uniform_in_solid(rng, instance.l, r0, n)
            p[:, 3:] = rng.uniform(0.0, 2.0 * math.pi, (n, 3))
        if "lambda" in lay:
            lam = lay.view(x, "lambda")
            lam[:] = rng.uniform(0.0, 1.0, lam.shape)
            lam /= lam.sum(axis=1, keepdims=True)
        if "sep" in lay:
            sep = lay.view(x, "sep")
            sep[:, 0] = rng.uniform(0.0, 2.0 * math.pi, len(sep))
            if fam == "platonic":
                sep[:, 1] = rng.uniform(-math.pi / 2, math.pi / 2, len(sep))
        fill_auxiliary(instance, sys, x, with_multipliers=False)
    return np.clip(x, sys.lower, sys.upper)


# ---------------------------------------------------------------- completion


def _poses(instance, x, sys):
    p = sys.layout.view(x, "pose")
    cls = Pose2 if instance.family == "polygon" else Pose3
    return [cls(*row) for row in p]


def fill_auxiliary(instance: Instance, sys: ConstraintSystem, x: np.ndarray, with_multipliers: bool = True) -> None:
    """Set halfspace variables (and optionally separation multipliers) from the poses, in place."""
    lay = sys.layout
    eps = instance.epsilon
    spec = polygon_constants(instance.m) if instance.family == "polygon" else platonic_spec(instance.m)
    poses = _poses(instance, x, sys)
    P = pairs(instance.n)
    dim = 2 if instance.family == "polygon" else 3
    if "halfspace" in lay:
        hs = lay.view(x, "halfspace")
        for i, pose in enumerate(poses):
            normals, offsets = body_halfspaces(pose, spec)
            hs[i, :dim, :] = normals.T
            hs[i, dim, :] = offsets - eps / 2.0
    if "sep" in lay:
        sep = lay.view(x, "sep")
        for q, (i, j) in enumerate(P):
            if with_multipliers:
                # the SAT axis points from i to j; i must lie on the upper side
                w = -_pair_axis(poses[i], poses[j], spec)
                sep[q, 0] = math.atan2(w[0], w[1]) % (2.0 * math.pi)
                if dim == 3:
                    sep[q, 1] = math.asin(max(-1.0, min(1.0, w[2])))
            w = _angle_direction(sep[q], dim)
            vi = _body_vertices(poses[i], spec) @ w
            vj = _body_vertices(poses[j], spec) @ w
            sep[q, -1] = 0.5 * (vi.min() + vj.max())
    if with_multipliers and "lambda" in lay:
        lam = lay.view(x, "lambda")
        for q, (i, j) in enumerate(P):
            u = _pair_axis(poses[i], poses[j], spec)
            ni, si = body_halfspaces(poses[i], spec)
            nj, sj = body_halfspaces(poses[j], spec)
            mu = _support_weights(ni, si, -u)
            nu = _support_weights(nj, sj, u)
            if instance.variant == "farkas":
                scale = min(mu.sum(), nu.sum())
            else:
                scale = mu.sum() + nu.sum()
            lam[q] = np.concatenate([mu, nu]) / scale


def _angle_direction(sep_row, dim):
    al = sep_row[0]
    if dim == 2:
        return np.array([math.sin(al), math.cos(al)])
    be = sep_row[1]
    return np.array([math.sin(al) * math.cos(be), math.cos(al) * math.cos(be), math.sin(be)])


def _body_vertices(pose, spec):
    from .geometry import polygon_vertices, solid_vertices

    if isinstance(pose, Pose2):
        return polygon_vertices(pose, spec)
    return solid_vertices(pose, spec)


def _pair_axis(pa, pb, spec) -> np.ndarray:
    from .certify import sat_margin

    return sat_margin(pa, pb, spec)[1]


def complete_ellipse_multipliers(sys: ConstraintSystem, x: np.ndarray) -> None:
    """Replace each ``t_i`` by the multiplier maximizing the determinant minor when that helps."""
    lay = sys.layout
    a, b = x[0], x[1]
    p = lay.view(x, "pose")
    t = lay.view(x, "t")
    before = normalized_violation(sys, x)
    old = t.copy()
    r_cont = sys.constants["r_cont"]
    for i, (px, py) in enumerate(p):
        t[i] = max(1.0, best_multiplier(a, b, px, py, r_cont))
    if normalized_violation(sys, x) > before:
        t[:] = old


def repair_ellipse(sys: ConstraintSystem, x: np.ndarray, tol: float) -> np.ndarray:
    """Scale axes and centers by the smallest tried ``1 + eta`` that reaches ``tol``.

    Tangent circles make the determinant minor flat in ``t``, which stalls
    the local solve just short of feasibility; uniform scaling moves every
    circle inward and every pair apart at a cost of ``(1 + eta)^2`` in area.
    """
    if normalized_violation(sys, x) <= tol:
        return x
    pose = sys.layout.slice("pose")

    def scaled(eta):
        y = x.copy()
        y[:2] *= 1.0 + eta
        y[pose] *= 1.0 + eta
        complete_ellipse_multipliers(sys, y)
        return y, normalized_violation(sys, y) <= tol

    lo = 0.0
    for eta in np.geomspace(1e-12, 1e-3, 28):
        y, ok = scaled(eta)
        if ok:
            hi, best = eta, y
            for _ in range(20):
                mid = 0.5 * (lo + hi)
                y, ok = scaled(mid)
                if ok:
                    hi, best = mid, y
                else:
                    lo = mid
            return best
        lo = eta
    return x


# ---------------------------------------------------------------- local solve


def normalized_violation(sys: ConstraintSystem, x: np.ndarray) -> float:
    """Largest constraint violation divided by ``max(1, |grad g_i|)``."""
    g, jv = sys.residuals_and_jacobian_values(x)
    if g.size == 0:
        return 0.0
    gn = np.sqrt(np.bincount(sys.jac_rows, weights=jv * jv, minlength=sys.n_rows))
    v = np.where(sys.equality, np.abs(g), np.maximum(g, 0.0))
    return float(np.max(v / np.maximum(1.0, gn)))


class _Problem:
    """Objective and constraint rows over a subset of the full variables."""

    def __init__(self, sys: ConstraintSystem, x_full: np.ndarray, mode: str):
        inst = sys.instance
        self.sys = sys
        self.template = np.array(x_full, dtype=float)
        self.sign = -1.0 if sys.sense == "max" else 1.0
        self.sat = mode == "sat_penalty" and inst.is_body
        lay = sys.layout
        if self.sat:
            free = np.concatenate([np.arange(lay.slice("R").start, lay.slice("R").stop), lay.index("pose").ravel()])
        else:
            free = np.arange(sys.n_vars)
        self.free = free
        pos = np.full(sys.n_vars, -1)
        pos[free] = np.arange(len(free))
        self.lower = sys.lower[free].copy()
        self.upper = sys.upper[free].copy()
        blocks = [b for b in sys.blocks if np.all(pos[b.cols[b.cols >= 0]] >= 0)]
        if self.sat:
            blocks = [b for b in blocks if b.tag != "distance"]
            # angles move freely and are wrapped afterwards
            ang = lay.index("pose")[:, 2:] if inst.family == "polygon" else lay.index("pose")[:, 3:]
            self.lower[pos[ang.ravel()]] = -np.inf
            self.upper[pos[ang.ravel()]] = np.inf
        self.blocks = blocks
        rows, cols, valid, eq = [], [], [], []
        off = 0
        for b in blocks:
            r = np.repeat(np.arange(off, off + b.rows), b.cols.shape[1])
            c = b.cols.reshape(-1)
            valid.append(c >= 0)
            rows.append(r[c >= 0])
            cols.append(pos[c[c >= 0]])
            eq.append(np.full(b.rows, b.equality))
            off += b.rows
        self.n_block_rows = off
        if self.sat:
            P = pairs(inst.n)
            self.I, self.J = P[:, 0], P[:, 1]
            pose_ix = lay.index("pose")
            k = pose_ix.shape[1]
            pc = np.concatenate([pos[pose_ix[self.I]], pos[pose_ix[self.J]]], axis=1)
            rows.append(np.repeat(np.arange(off, off + len(P)), 2 * k))
            cols.append(pc.reshape(-1))
            eq.append(np.zeros(len(P), dtype=bool))
            off += len(P)
            self.spec = polygon_constants(inst.m) if inst.family == "polygon" else platonic_spec(inst.m)
            self.pose_slice = lay.slice("pose")
            self.pose_shape = lay.shape("pose")
        self.valid = np.concatenate(valid) if valid else np.zeros(0, dtype=bool)
        self.rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
        self.cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        self.eq = np.concatenate(eq) if eq else np.zeros(0, dtype=bool)
        self.n_rows = off
        self.nz = len(free)

    def full(self, z: np.ndarray) -> np.ndarray:
        x = self.template.copy()
        x[self.free] = z
        return x

    def objective(self, z):
        val, grad = self.sys.objective(self.full(z))
        return self.sign * val, self.sign * grad[self.free]

    def constraints(self, z):
        x = self.full(z)
        vals, jacs = [], []
        for b in self.blocks:
            v, j = b.func(x)
            vals.append(v)
            jacs.append(np.asarray(j, dtype=float).reshape(-1))
        g = np.concatenate(vals) if vals else np.zeros(0)
        jv = np.concatenate(jacs)[self.valid] if jacs else np.zeros(0)
        if self.sat and len(self.I):
            poses = x[self.pose_slice].reshape(self.pose_shape)
            fn = margins_2d if self.sys.instance.family == "polygon" else margins_3d
            margin, grad = fn(poses, self.I, self.J, self.spec)
            g = np.concatenate([g, self.sys.instance.epsilon - margin])
            jv = np.concatenate([jv, -grad.reshape(-1)])
        return g, jv

    def row_norms(self, jv):
        return np.sqrt(np.bincount(self.rows, weights=jv * jv, minlength=self.n_rows))


def local_solve(
    sys: ConstraintSystem, x0: np.ndarray, config: SolverConfig, deadline: float | None = None
) -> Solution:
    """Augmented-Lagrangian local solve from ``x0``; never raises on numerical trouble."""
    t_start = time.monotonic()
    inst = sys.instance
    x0 = np.clip(np.asarray(x0, dtype=float), sys.lower, sys.upper)
    prob = _Problem(sys, x0, config.mode)
    z = x0[prob.free].copy()
    lo = np.where(np.isfinite(prob.lower), prob.lower, -np.inf)
    hi = np.where(np.isfinite(prob.upper), prob.upper, np.inf)
    z = np.clip(z, lo, hi)
    bounds = list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))

    g, jv = prob.constraints(z)
    scale = 1.0 / np.maximum(1.0, prob.row_norms(jv))
    mult = np.zeros(prob.n_rows)
    rho = config.rho0
    eq = prob.eq
    rows, cols, nz = prob.rows, prob.cols, prob.nz
    status = "max_outer"
    inner_total = 0
    prev_viol = math.inf
    prev_f = math.inf
    kkt = math.inf
    bad = [False]

    def lagrangian(z):
        f, gf = prob.objective(z)
        g, jv = prob.constraints(z)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            bad[0] = True
            return 1e300, np.zeros_like(z)
        gs = g * scale
        shifted = mult + rho * gs
        w = np.where(eq, shifted, np.maximum(shifted, 0.0))
        val = f + float(np.sum(w * w - mult * mult)) / (2.0 * rho)
        grad = gf + np.bincount(cols, weights=jv * (w * scale)[rows], minlength=nz)
        return val, grad

    for outer in range(config.max_outer):
        res = minimize(
            lagrangian,
            z,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": config.max_inner_iters, "maxfun": 4 * config.max_inner_iters, "ftol": 1e-15,
                     "gtol": config.kkt_tol, "maxcor": 20},
        )
        inner_total += int(res.nit)
        if bad[0] or not np.all(np.isfinite(res.x)):
            status = "nonfinite"
            break
        z = res.x
        g, jv = prob.constraints(z)
        gs = g * scale
        viol_rows = np.where(eq, np.abs(gs), np.maximum(gs, 0.0))
        viol = float(viol_rows.max(initial=0.0))
        shifted = mult + rho * gs
        mult = np.where(eq, shifted, np.maximum(shifted, 0.0))
        f, _ = prob.objective(z)
        _, gl = lagrangian(z)
        kkt = float(np.max(np.abs(z - np.clip(z - gl, lo, hi)), initial=0.0))
        raw = np.where(eq, np.abs(g), np.maximum(g, 0.0))
        norm_viol = float(np.max(raw / np.maximum(1.0, prob.row_norms(jv)), initial=0.0))
        if norm_viol <= config.feas_tol and (kkt <= config.kkt_tol or abs(f - prev_f) <= 1e-12 * max(1.0, abs(f))):
            status = "converged"
            break
        if viol > 0.5 * prev_viol:
            rho = min(rho * 10.0, RHO_CAP)
        prev_viol = viol
        prev_f = f
        if deadline is not None and time.monotonic() > deadline:
            status = "deadline"
            break

    x = prob.full(z)
    if prob.sat:
        _wrap_angles(inst, sys, x)
        try:
            fill_auxiliary(inst, sys, x)
        except CertificateError:
            status = "no_certificate"
    elif inst.family == "circle_ellipse":
        complete_ellipse_multipliers(sys, x)
    x = np.clip(x, sys.lower, sys.upper)
    if inst.family == "circle_ellipse" and status != "nonfinite":
        x = repair_ellipse(sys, x, config.feas_tol)
    viol = normalized_violation(sys, x) if status not in ("nonfinite", "no_certificate") else math.inf
    feasible = viol <= config.feas_tol
    obj = sys.objective(x)[0]
    meta = {
        "status": status,
        "feasible": bool(feasible),
        "max_violation": viol,
        "kkt": kkt,
        "inner_iterations": inner_total,
        "outer_iterations": outer + 1,
        "mode": config.mode,
        "wall_time": time.monotonic() - t_start,
        "polished": False,
    }
    return Solution(instance=inst, x=x, objective=float(obj), meta=meta)


def _wrap_angles(inst, sys, x):
    p = sys.layout.view(x, "pose")
    if inst.family == "polygon":
        p[:, 2] = np.mod(p[:, 2], polygon_constants(inst.m).phi)
    else:
        p[:, 3:] = np.mod(p[:, 3:], 2.0 * math.pi)
    x[sys.layout.slice("pose")] = p.reshape(-1)


# ---------------------------------------------------------------- multistart


def _better(a: float, b: float, sense: str) -> bool:
    return a > b if sense == "max" else a < b


def _reached(value: float, target: float | None, sense: str) -> bool:
    if target is None:
        return False
    return value >= target if sense == "max" else value <= target


def restart_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


def _run_restart(args):
    instance, config, index, upper_a, deadline = args
    sys = build_system(instance)
    if upper_a is not None:
        up = sys.upper.copy()
        up[0] = min(up[0], upper_a)
        up[1] = min(up[1], upper_a)
        sys = sys.with_bounds(upper=up)
    rng = restart_rng(config.seed, index)
    x0 = sample_start(instance, rng, sys)
    sol = local_solve(sys, x0, config, deadline=deadline)
    sol.meta.update({"seed": config.seed, "restart": index})
    return index, sol


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def multistart(instance: Instance, config: SolverConfig, progress=None) -> SolveReport:
    """Independent local solves from random starts; keeps the best feasible result.

    Restart ``k`` draws its start from a generator seeded by ``(seed, k)``, so
    serial and parallel runs visit the same starts.
    """
    t0 = time.monotonic()
    deadline = t0 + config.time_budget
    sense = instance.sense
    report = SolveReport(best=None)
    workers = config.workers or default_workers()
    upper_a = None

    def absorb(index: int, sol: Solution):
        nonlocal upper_a
        report.restarts_completed += 1
        if not sol.meta["feasible"]:
            return
        report.feasible_restarts += 1
        best = report.best
        # ties keep the lower restart index
        if best is None or _better(sol.objective, best.objective, sense) or (
            sol.objective == best.objective and index < best.meta["restart"]
        ):
            report.best = sol
            report.incumbents.append((index, sol.objective))
            if instance.family == "circle_ellipse":
                upper_a = sol.objective / math.pi
        if progress is not None:
            progress(index, sol, report)

    reason = "restarts"
    if workers <= 1:
        for k in range(config.restarts):
            if time.monotonic() >= deadline:
                reason = "time_budget"
                break
            absorb(*_run_restart((instance, config, k, upper_a, deadline)))
            if report.best is not None and _reached(report.best.objective, config.target, sense):
                reason = "target"
                break
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            pending = {}
            k = 0
            while k < config.restarts or pending:
                while k < config.restarts and len(pending) < workers and time.monotonic() < deadline:
                    pending[pool.submit(_run_restart, (instance, config, k, upper_a, deadline))] = k
                    k += 1
                if not pending:
                    reason = "time_budget"
                    break
                done = next(iter(_wait_first(pending)))
                pending.pop(done)
                absorb(*done.result())
                if report.best is not None and _reached(report.best.objective, config.target, sense):
                    reason = "target"
                    for f in pending:
                        f.cancel()
                    break
            if reason == "restarts" and k < config.restarts:
                reason = "time_budget"
    if report.best is None:
        reason = "no_feasible" if reason == "restarts" else reason
    report.reason = reason
    report.elapsed = time.monotonic() - t0
    if report.best is not None:
        report.best.meta["restarts_used"] = report.restarts_completed
    return report


def _wait_first(pending):
    from concurrent.futures import FIRST_COMPLETED, wait

    done, _ = wait(list(pending), return_when=FIRST_COMPLETED)
    return sorted(done, key=lambda f: pending[f])


def solve(instance: Instance, config: SolverConfig | None = None, **overrides) -> SolveReport:
    config = replace(config or SolverConfig(), **overrides)
    return multistart(instance, config)
