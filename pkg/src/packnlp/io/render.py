"""Deterministic drawings: SVG for planar packings, Wavefront OBJ for solids."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..geometry import platonic_spec, polygon_constants, rotation_zyx
from ..models import build_system
from ..models.base import Solution

STROKE = "#1f3a5f"
FILL = "#9ec5e8"


def _fmt(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _points(pts) -> str:
    return " ".join(f"{_fmt(px)},{_fmt(-py)}" for px, py in pts)


def _svg(bounds, body: list[str]) -> str:
    x0, y0, x1, y1 = bounds
    pad = 0.04 * max(x1 - x0, y1 - y0)
    # y is flipped so that the drawing keeps the model orientation
    view = f"{_fmt(x0 - pad)} {_fmt(-y1 - pad)} {_fmt(x1 - x0 + 2 * pad)} {_fmt(y1 - y0 + 2 * pad)}"
    width = 0.004 * max(x1 - x0, y1 - y0)
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{view}" width="600" height="600">\n'
        f'<g fill="none" stroke="{STROKE}" stroke-width="{_fmt(width)}">'
    )
    return "\n".join([head, *body, "</g>", "</svg>"]) + "\n"


def _label(i: int, cx: float, cy: float, size: float) -> str:
    return (
        f'<text x="{_fmt(cx)}" y="{_fmt(-cy)}" font-size="{_fmt(size)}" text-anchor="middle" '
        f'dominant-baseline="central" fill="{STROKE}" stroke="none">{i}</text>'
    )


def render_svg(sol: Solution) -> str:
    inst = sol.instance
    if inst.family == "platonic":
        raise ValueError("solids render to OBJ, not SVG")
    sys = build_system(inst)
    lay, x = sys.layout, np.asarray(sol.x, dtype=float)
    p = lay.view(x, "pose")
    body: list[str] = []
    if inst.is_circle:
        alpha = x[lay.slice("alpha")][0] if inst.family == "circle_rect" else 1.0
        h = 2.0 - alpha
        body.append(f'<rect x="0" y="{_fmt(-h)}" width="{_fmt(alpha)}" height="{_fmt(h)}"/>')
        r = lay.view(x, "r")
        for i in range(inst.n):
            body.append(
                f'<circle cx="{_fmt(p[i, 0])}" cy="{_fmt(-p[i, 1])}" r="{_fmt(r[i])}" fill="{FILL}"/>'
            )
            body.append(_label(i, p[i, 0], p[i, 1], max(r[i], 1e-3)))
        bounds = (0.0, 0.0, alpha, h)
    elif inst.family == "circle_ellipse":
        a, b = lay.view(x, "axes")
        body.append(f'<ellipse cx="0" cy="0" rx="{_fmt(a)}" ry="{_fmt(b)}"/>')
        for i in range(inst.n):
            body.append(f'<circle cx="{_fmt(p[i, 0])}" cy="{_fmt(-p[i, 1])}" r="1" fill="{FILL}"/>')
            body.append(_label(i, p[i, 0], p[i, 1], 0.8))
        bounds = (-a, -b, a, b)
    else:
        R = x[0]
        outer, inner = polygon_constants(inst.l), polygon_constants(inst.m)
        body.append(f'<polygon points="{_points(R * outer.vertices(0.0))}"/>')
        for i in range(inst.n):
            verts = p[i, :2] + inner.vertices(p[i, 2])
            body.append(f'<polygon points="{_points(verts)}" fill="{FILL}"/>')
            body.append(_label(i, p[i, 0], p[i, 1], 0.6 * inner.rho))
        bounds = (-R, -R, R, R)
    return _svg(bounds, body)


def _oriented_triangles(verts: np.ndarray, faces) -> list[tuple[int, int, int]]:
    center = verts.mean(axis=0)
    tris = []
    for f in faces:
        for a, b in zip(f[1:-1], f[2:]):
            tri = (f[0], a, b)
            n = np.cross(verts[a] - verts[f[0]], verts[b] - verts[f[0]])
            if n @ (verts[f[0]] - center) < 0:
                tri = (f[0], b, a)
            tris.append(tri)
    return tris


def render_obj(sol: Solution) -> str:
    """Container plus one mesh per solid, triangulated with outward winding."""
    inst = sol.instance
    if inst.family != "platonic":
        raise ValueError("only Platonic packings render to OBJ")
    sys = build_system(inst)
    x = np.asarray(sol.x, dtype=float)
    p = sys.layout.view(x, "pose")
    outer, inner = platonic_spec(inst.l), platonic_spec(inst.m)
    meshes = [("container", x[0] * outer.vertices, outer.faces)]
    for i in range(inst.n):
        verts = p[i, :3] + inner.vertices @ rotation_zyx(*p[i, 3:]).T
        meshes.append((f"solid_{i}", verts, inner.faces))
    lines = [f"# packnlp {inst.key}"]
    base = 1
    for name, verts, faces in meshes:
        lines.append(f"o {name}")
        lines += [f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}" for v in verts]
        lines += [f"f {a + base} {b + base} {c + base}" for a, b, c in _oriented_triangles(verts, faces)]
        base += len(verts)
    return "\n".join(lines) + "\n"


def render(sol: Solution) -> tuple[str, str]:
    """``(text, extension)`` for the natural format of the family."""
    if sol.instance.family == "platonic":
        return render_obj(sol), "obj"
    return render_svg(sol), "svg"


def write_render(sol: Solution, path: str | Path) -> None:
    text, _ = render(sol)
    Path(path).write_text(text)
