"""Solver-neutral model export as JSON expression trees.

A tree is a JSON number (constant), ``["var", i]`` or ``[op, child, ...]``
with ``op`` one of ``+``, ``-`` (binary, or unary negation), ``*``,
``^`` (child and a nonnegative integer exponent), ``sin`` and ``cos``.
Every tree applies its operations in the same order as the vectorized
residual code, so :func:`evaluate` reproduces :meth:`ConstraintSystem.residuals`
up to the last few units in the last place.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..geometry import platonic_spec, polygon_constants
from ..models import build_system, pairs
from ..models.base import ConstraintSystem, Instance, left_sum
from ..models.platonic import sym_cone_halfplanes

EXPORT_FORMAT = "packnlp-model"
EXPORT_VERSION = 1
OPERATORS = ("+", "-", "*", "^", "sin", "cos")


class Expr:
    """Immutable expression node built with ordinary arithmetic operators."""

    __slots__ = ("op", "args")

    def __init__(self, op: str, *args):
        self.op = op
        self.args = args

    @staticmethod
    def wrap(v) -> "Expr":
        if isinstance(v, Expr):
            return v
        return Expr("const", float(v))

    def __add__(self, o):
        return Expr("+", self, Expr.wrap(o))

    def __radd__(self, o):
        return Expr("+", Expr.wrap(o), self)

    def __sub__(self, o):
        return Expr("-", self, Expr.wrap(o))

    def __rsub__(self, o):
        return Expr("-", Expr.wrap(o), self)

    def __mul__(self, o):
        return Expr("*", self, Expr.wrap(o))

    def __rmul__(self, o):
        return Expr("*", Expr.wrap(o), self)

    def __neg__(self):
        return Expr("-", self)

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        return Expr("^", self, int(k))

    def to_json(self):
        if self.op == "const":
            return self.args[0]
        if self.op == "var":
            return ["var", self.args[0]]
        out = [self.op]
        for a in self.args:
            out.append(a if isinstance(a, int) else a.to_json())
        return out


def var(i: int) -> Expr:
    return Expr("var", int(i))


def sin(e) -> Expr:
    return Expr("sin", Expr.wrap(e))


def cos(e) -> Expr:
    return Expr("cos", Expr.wrap(e))


def evaluate(tree, x: np.ndarray):
    """Evaluate a JSON tree at ``x`` (one point, or points stacked on axis 0)."""
    x = np.asarray(x, dtype=float)
    if isinstance(tree, (int, float)):
        return np.float64(tree)
    op = tree[0]
    if op == "var":
        return x[..., tree[1]]
    if op == "sin":
        return np.sin(evaluate(tree[1], x))
    if op == "cos":
        return np.cos(evaluate(tree[1], x))
    if op == "^":
        base, k = evaluate(tree[1], x), int(tree[2])
        if k == 0:
            return np.ones_like(base)
        acc = base
        for _ in range(k - 1):
            acc = acc * base
        return acc
    if op == "-" and len(tree) == 2:
        return -evaluate(tree[1], x)
    a, b = evaluate(tree[1], x), evaluate(tree[2], x)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    raise ValueError(f"unknown operator {op!r}")


# ------------------------------------------------------------ per family


def _vars(sys: ConstraintSystem, name: str) -> np.ndarray:
    ix = sys.layout.index(name)
    out = np.empty(ix.shape, dtype=object)
    for k, i in np.ndenumerate(ix):
        out[k] = var(i)
    return out


def _circle_rows(sys: ConstraintSystem) -> dict[str, list[Expr]]:
    inst, c = sys.instance, sys.constants
    p, r = _vars(sys, "pose"), _vars(sys, "r")
    free = inst.family == "circle_rect"
    alpha = _vars(sys, "alpha")[0] if free else Expr.wrap(1.0)
    height = 2.0 - alpha if free else Expr.wrap(1.0)
    c_cont, c_sep = c["c_cont"], c["c_sep"]
    rows: dict[str, list[Expr]] = {"containment": []}
    for i in range(inst.n):
        cr = c_cont * r[i]
        px, py = p[i]
        rows["containment"] += [cr - px, (px + cr) - alpha, cr - py, (py + cr) - height]
    if free:
        rows["radius_cap"] = [r[i] - alpha * 0.5 for i in range(inst.n)]
    sep = []
    for i, j in pairs(inst.n):
        dx, dy = p[i, 0] - p[j, 0], p[i, 1] - p[j, 1]
        s = c_sep * (r[i] + r[j])
        sep.append(s * s - (dx * dx + dy * dy))
    rows["separation"] = sep
    rows["area"] = [left_sum(ri * ri for ri in r) - c["area_bound"]]
    return rows


def _ellipse_rows(sys: ConstraintSystem) -> dict[str, list[Expr]]:
    inst, c = sys.instance, sys.constants
    opts = inst.ellipse
    a, b = _vars(sys, "axes")
    p, t = _vars(sys, "pose"), _vars(sys, "t")
    rc2 = c["r_cont"] * c["r_cont"]
    r_cont = c["r_cont"]
    n = inst.n
    rows: dict[str, list[Expr]] = {}
    sep = []
    for i, j in pairs(n):
        dx, dy = p[i, 0] - p[j, 0], p[i, 1] - p[j, 1]
        sep.append(c["dist2"] - (dx * dx + dy * dy))
    rows["separation"] = sep
    cont = []
    a2, b2 = a * a, b * b
    for i in range(n):
        px, py, ti = p[i, 0], p[i, 1], t[i]
        q = (px * px + py * py) - rc2
        E = a2 * b2 + ti * q
        A = ti - b2
        C = ti - a2
        tx, ty = ti * px, ti * py
        B2, D2 = tx * tx, ty * ty
        m3 = C * E - D2
        m4 = A * E - B2
        m5 = (A * C) * E - (A * D2 + C * B2)
        cont += [-C, -E, -m3, -m4, -m5]
    rows["containment"] = cont
    rows["axis_order"] = [b - a]
    if opts.strengthening:
        rows["center_inside"] = [(b2 * (px * px) + a2 * (py * py)) - a2 * b2 for px, py in p]
        box = []
        for px, py in p:
            box += [(px + r_cont) - a, (r_cont - px) - a, (py + r_cont) - b, (r_cont - py) - b]
        rows["box"] = box
        rows["area_cut"] = [float(n) - a * b]
    if opts.symmetry == "centroid":
        rows["centroid"] = [-left_sum(p[:, 0]), -left_sum(p[:, 1])]
    elif opts.symmetry == "sort_x" and n >= 2:
        rows["sort_x"] = [p[i, 0] - p[i + 1, 0] for i in range(n - 1)]
        rows["right_half"] = [-p[math.ceil(n / 2) - 1, 0]]
    elif opts.symmetry == "generic_line" and n >= 2:
        al, be = opts.line
        rows["line_order"] = [
            (al * p[i, 0] + be * p[i, 1]) - (al * p[i + 1, 0] + be * p[i + 1, 1]) for i in range(n - 1)
        ]
    return rows


def _rotation(ang) -> list[list[Expr]]:
    t, i, k = ang
    ct, st, ci, si, ck, sk = cos(t), sin(t), cos(i), sin(i), cos(k), sin(k)
    return [
        [ct * ci, ct * si * sk - st * ck, ct * si * ck + st * sk],
        [st * ci, st * si * sk + ct * ck, st * si * ck - ct * sk],
        [-si, ci * sk, ci * ck],
    ]


def _dot(u, v) -> Expr:
    return left_sum(u[k] * v[k] for k in range(len(u)))


def _farkas_rows(sys: ConstraintSystem, F: int, dim: int) -> dict[str, list[Expr]]:
    P = pairs(sys.instance.n)
    lam, h = _vars(sys, "lambda"), _vars(sys, "halfspace")
    rows: dict[str, list[Expr]] = {}
    if sys.instance.variant == "farkas":
        norm = []
        for p in range(len(P)):
            norm += [1.0 - left_sum(lam[p, :F]), 1.0 - left_sum(lam[p, F:])]
        rows["farkas_norm"] = norm
    else:
        rows["farkas_sum"] = [left_sum(lam[p]) - 1.0 for p in range(len(P))]

    def combo(p, comp):
        i, j = P[p]
        terms = [lam[p, k] * h[i, comp, k] for k in range(F)] + [lam[p, F + k] * h[j, comp, k] for k in range(F)]
        return left_sum(terms)

    for comp in range(dim):
        rows[f"farkas_normal_{'xyz'[comp]}"] = [combo(p, comp) for p in range(len(P))]
    rows["farkas_gap"] = [-combo(p, dim) for p in range(len(P))]
    return rows


def _shared_body_rows(sys: ConstraintSystem, dim: int, rows: dict, cone: np.ndarray) -> None:
    inst = sys.instance
    pose = _vars(sys, "pose")
    P = pairs(inst.n)
    if inst.variant in ("dist", "sym") and len(P):
        d = 2.0 * sys.constants["rho_m"]
        d2 = d * d
        dist = []
        for i, j in P:
            diff = [pose[i, k] - pose[j, k] for k in range(dim)]
            dist.append(d2 - left_sum(dk * dk for dk in diff))
        rows["distance"] = dist
    if inst.variant == "sym" and inst.n >= 2:
        rows["sort_x"] = [pose[i, 0] - pose[i + 1, 0] for i in range(inst.n - 1)]
        sums = [left_sum(pose[:, k]) for k in range(dim)]
        rows["centroid_cone"] = [-left_sum(hp[k] * sums[k] for k in range(dim)) for hp in cone]


def _polygon_rows(sys: ConstraintSystem) -> dict[str, list[Expr]]:
    inst, c = sys.instance, sys.constants
    inner, outer = polygon_constants(inst.m), polygon_constants(inst.l)
    R = var(0)
    pose = _vars(sys, "pose")
    m, l, n = inst.m, inst.l, inst.n
    delta = inner.delta
    jphi = inner.phi * np.arange(m)
    sk, ck = c["sin_k"], c["cos_k"]
    rows: dict[str, list[Expr]] = {}
    cont = []
    for i in range(n):
        px, py, th = pose[i]
        for j in range(m):
            ang = th + delta[j]
            vx = px + c["c_vert"] * sin(ang)
            vy = py + c["c_vert"] * cos(ang)
            cont += [-(R * c["rho_l"] + (sk[k] * vx + ck[k] * vy)) for k in range(l)]
    rows["containment"] = cont
    if inst.variant != "inner":
        h = _vars(sys, "halfspace")
        rows["normal_a"] = [h[i, 0, j] - sin(pose[i, 2] + jphi[j]) for i in range(n) for j in range(m)]
        rows["normal_b"] = [h[i, 1, j] - cos(pose[i, 2] + jphi[j]) for i in range(n) for j in range(m)]
        rows["offset"] = [
            h[i, 2, j] - ((h[i, 0, j] * pose[i, 0] + h[i, 1, j] * pose[i, 1]) - c["rho_sep"])
            for i in range(n)
            for j in range(m)
        ]
        rows.update(_farkas_rows(sys, m, 2))
    else:
        sep = _vars(sys, "sep")
        half = inst.epsilon / 2.0
        upper, lower = [], []
        for p, (i, j) in enumerate(pairs(n)):
            al, d = sep[p]
            sa, ca = sin(al), cos(al)

            def proj(e, k):
                ang = pose[e, 2] + delta[k]
                return sa * (pose[e, 0] + sin(ang)) + ca * (pose[e, 1] + cos(ang))

            upper += [(d + half) - proj(i, k) for k in range(m)]
            lower += [proj(j, k) - (d - half) for k in range(m)]
        rows["inner_upper"], rows["inner_lower"] = upper, lower
    half_angle = outer.phi / 2.0
    cone = np.array([[1.0, 0.0], [-math.cos(half_angle), math.sin(half_angle)]])
    _shared_body_rows(sys, 2, rows, cone)
    return rows


def _platonic_rows(sys: ConstraintSystem) -> dict[str, list[Expr]]:
    inst, c = sys.instance, sys.constants
    inner, outer = platonic_spec(inst.m), platonic_spec(inst.l)
    V, Nf, NL = inner.vertices, inner.normals, outer.normals
    R = var(0)
    pose = _vars(sys, "pose")
    n, F = inst.n, len(Nf)
    rots = [_rotation(pose[i, 3:]) for i in range(n)]
    rows: dict[str, list[Expr]] = {}
    cont = []
    for i in range(n):
        rot = rots[i]
        for v in V:
            w = [pose[i, cc] + c["c_vert"] * _dot(rot[cc], v) for cc in range(3)]
            cont += [-(R * c["rho_l"] + _dot(w, nk)) for nk in NL]
    rows["containment"] = cont
    if inst.variant != "inner":
        h = _vars(sys, "halfspace")
        for comp, name in enumerate(("normal_a", "normal_b", "normal_c")):
            rows[name] = [h[i, comp, f] - _dot(rots[i][comp], Nf[f]) for i in range(n) for f in range(F)]
        rows["offset"] = [
            h[i, 3, f]
            - (((h[i, 0, f] * pose[i, 0] + h[i, 1, f] * pose[i, 1]) + h[i, 2, f] * pose[i, 2]) - c["rho_sep"])
            for i in range(n)
            for f in range(F)
        ]
        rows.update(_farkas_rows(sys, F, 3))
    else:
        sep = _vars(sys, "sep")
        half = inst.epsilon / 2.0
        upper, lower = [], []
        for p, (i, j) in enumerate(pairs(n)):
            al, be, d = sep[p]
            cb = cos(be)
            u = [sin(al) * cb, cos(al) * cb, sin(be) * 1.0]

            def proj(e, v):
                w = [pose[e, cc] + _dot(rots[e][cc], v) for cc in range(3)]
                return _dot(w, u)

            upper += [(d + half) - proj(i, v) for v in V]
            lower += [proj(j, v) - (d - half) for v in V]
        rows["inner_upper"], rows["inner_lower"] = upper, lower
    _shared_body_rows(sys, 3, rows, sym_cone_halfplanes(inst.l))
    return rows


def _objective(sys: ConstraintSystem) -> Expr:
    fam = sys.instance.family
    if sys.instance.is_circle:
        return left_sum(_vars(sys, "r"))
    if fam == "circle_ellipse":
        a, b = _vars(sys, "axes")
        return (math.pi * a) * b
    return var(0)


_BUILDERS = {
    "circle_square": _circle_rows,
    "circle_rect": _circle_rows,
    "circle_ellipse": _ellipse_rows,
    "polygon": _polygon_rows,
    "platonic": _platonic_rows,
}


def _bound(v: float):
    return None if not math.isfinite(v) else float(v)


def export_model(instance: Instance, sys: ConstraintSystem | None = None) -> dict:
    """The model of ``instance`` as a JSON-ready dictionary."""
    sys = sys or build_system(instance)
    built = _BUILDERS[instance.family](sys)
    constraints = []
    for block in sys.blocks:
        exprs = built.get(block.name)
        if exprs is None or len(exprs) != block.rows:
            raise RuntimeError(f"expression rows for block {block.name!r} do not match the model")
        kind = "==0" if block.equality else "<=0"
        for k, e in enumerate(exprs):
            constraints.append({"name": f"{block.name}[{k}]", "tag": block.tag, "type": kind, "expr": e.to_json()})
    labels = sys.layout.labels
    return {
        "format": EXPORT_FORMAT,
        "version": EXPORT_VERSION,
        "instance": instance.to_dict(),
        "sense": sys.sense,
        "variables": [
            {"name": labels[i], "lower": _bound(sys.lower[i]), "upper": _bound(sys.upper[i])}
            for i in range(sys.n_vars)
        ],
        "objective": _objective(sys).to_json(),
        "constraints": constraints,
    }


def evaluate_constraints(model: dict, x: np.ndarray) -> np.ndarray:
    """Residuals of every exported constraint at ``x``, in export order."""
    return np.array([evaluate(c["expr"], x) for c in model["constraints"]]).T


def write_model(instance: Instance, path: str | Path) -> dict:
    model = export_model(instance)
    Path(path).write_text(json.dumps(model, separators=(",", ":"), allow_nan=False) + "\n")
    return model


def read_model(path: str | Path) -> dict:
    model = json.loads(Path(path).read_text())
    if model.get("format") != EXPORT_FORMAT:
        raise ValueError(f"{path} is not an exported model")
    return model
