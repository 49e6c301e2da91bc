"""Regular polygons, Platonic solids, poses and separating-axis primitives.

Conventions shared by every module:

* A regular ``m``-gon has unit circumradius.  Edge ``j`` has inward normal
  ``(sin(theta + j*phi), cos(theta + j*phi))`` and vertex ``j`` sits at
  ``center + (sin(theta + delta_j), cos(theta + delta_j))``.
* A Platonic solid has unit circumradius; ``normals[f]`` is the inward unit
  normal of face ``f`` so that ``normals[f] @ v == -rho`` for every vertex
  ``v`` on that face.
* Half-spaces are written ``n . X >= s``; the body interior is the strict
  side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

PLATONIC_KINDS = ("tetrahedron", "octahedron", "cube", "icosahedron", "dodecahedron")

# Parallel edge pairs whose cross product is shorter than this are skipped.
CROSS_EPS = 1e-12


class InvalidShapeError(ValueError):
    """Raised for an unsupported polygon order or solid kind."""


@dataclass(frozen=True)
class RegularPolygonSpec:
    m: int
    rho: float
    phi: float
    delta: np.ndarray = field(repr=False)

    @property
    def area(self) -> float:
        return 0.5 * self.m * math.sin(self.phi)

    def vertices(self, theta: float = 0.0) -> np.ndarray:
        ang = theta + self.delta
        return np.stack([np.sin(ang), np.cos(ang)], axis=-1)

    def normals(self, theta: float = 0.0) -> np.ndarray:
        ang = theta + self.phi * np.arange(self.m)
        return np.stack([np.sin(ang), np.cos(ang)], axis=-1)


@dataclass(frozen=True)
class PlatonicSpec:
    kind: str
    vertices: np.ndarray = field(repr=False)
    faces: tuple = field(repr=False)
    normals: np.ndarray = field(repr=False)
    rho: float = 0.0
    volume: float = 0.0
    edges: np.ndarray = field(repr=False, default=None)
    edge_dirs: np.ndarray = field(repr=False, default=None)

    @property
    def index(self) -> int:
        """1-based type number (tetrahedron=1 ... dodecahedron=5)."""
        return PLATONIC_KINDS.index(self.kind) + 1


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    theta: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Pose3:
    x: float
    y: float
    z: float
    theta: float
    iota: float
    kappa: float

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.theta, self.iota, self.kappa)


@lru_cache(maxsize=None)
def polygon_constants(m: int) -> RegularPolygonSpec:
    if int(m) != m or m < 3:
        raise InvalidShapeError(f"polygon order must be an integer >= 3, got {m!r}")
    m = int(m)
    phi = 2.0 * math.pi / m
    delta = (np.arange(m) + ((m - 1) % 2) / 2.0) * phi
    delta.setflags(write=False)
    return RegularPolygonSpec(m=m, rho=math.cos(math.pi / m), phi=phi, delta=delta)


def platonic_kind(kind: int | str) -> str:
    """Normalize a solid given by name or 1-based type number."""
    if isinstance(kind, str):
        if kind.isdigit():
            kind = int(kind)
        else:
            name = kind.lower()
            if name not in PLATONIC_KINDS:
                raise InvalidShapeError(f"unknown Platonic solid {kind!r}")
            return name
    if isinstance(kind, (int, np.integer)) and 1 <= kind <= 5:
        return PLATONIC_KINDS[int(kind) - 1]
    raise InvalidShapeError(f"unknown Platonic solid {kind!r}")


def _raw_vertices(kind: str) -> np.ndarray:
    g = (1.0 + math.sqrt(5.0)) / 2.0
    if kind == "tetrahedron":
        pts = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    elif kind == "octahedron":
        pts = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    elif kind == "cube":
        pts = [(sx, sy, sz) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]
    elif kind == "icosahedron":
        pts = []
        for s1 in (1, -1):
            for s2 in (1, -1):
                pts += [(0, s1, s2 * g), (s1, s2 * g, 0), (s2 * g, 0, s1)]
    else:
        pts = [(sx, sy, sz) for sx in (1, -1) for sy in (1, -1) for sz in (1, -1)]
        for s1 in (1, -1):
            for s2 in (1, -1):
                pts += [(0, s1 / g, s2 * g), (s1 / g, s2 * g, 0), (s2 * g, 0, s1 / g)]
    v = np.array(pts, dtype=float)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _faces_from_vertices(v: np.ndarray) -> list[list[int]]:
    """Group vertices into faces: maximal sets on a common supporting plane."""
    from scipy.spatial import ConvexHull

    hull = ConvexHull(v)
    planes: dict[tuple, set] = {}
    for simplex, eq in zip(hull.simplices, hull.equations):
        key = tuple(np.round(eq[:3], 9))
        planes.setdefault(key, set()).update(int(i) for i in simplex)
    faces = []
    for key in sorted(planes, reverse=True):
        idx = sorted(planes[key])
        out = np.array(key)
        c = v[idx].mean(axis=0)
        # order counter-clockwise seen from outside
        e1 = v[idx[0]] - c
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(out, e1)
        ang = [math.atan2((v[i] - c) @ e2, (v[i] - c) @ e1) for i in idx]
        faces.append([i for _, i in sorted(zip(ang, idx))])
    return faces


def _closed_form_volume(kind: str) -> float:
    g = (1.0 + math.sqrt(5.0)) / 2.0
    if kind == "tetrahedron":
        a = math.sqrt(8.0 / 3.0)
        return a**3 / (6.0 * math.sqrt(2.0))
    if kind == "octahedron":
        return 4.0 / 3.0
    if kind == "cube":
        return (2.0 / math.sqrt(3.0)) ** 3
    if kind == "icosahedron":
        a = 2.0 / math.sqrt(1.0 + g * g)
        return 5.0 / 12.0 * (3.0 + math.sqrt(5.0)) * a**3
    a = 2.0 / (g * math.sqrt(3.0))
    return (15.0 + 7.0 * math.sqrt(5.0)) / 4.0 * a**3


def face_sum_volume(vertices: np.ndarray, faces) -> float:
    """Volume by the divergence theorem (fan-triangulated faces)."""
    total = 0.0
    for f in faces:
        p0 = vertices[f[0]]
        for a, b in zip(f[1:-1], f[2:]):
            total += np.dot(p0, np.cross(vertices[a], vertices[b]))
    return abs(total) / 6.0


@lru_cache(maxsize=None)
def platonic_spec(kind: int | str) -> PlatonicSpec:
    kind = platonic_kind(kind)
    v = _raw_vertices(kind)
    faces = _faces_from_vertices(v)
    normals = np.array([-v[f].mean(axis=0) for f in faces])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    rho = float(np.mean([-(normals[k] @ v[i]) for k, f in enumerate(faces) for i in f]))

    edges = set()
    for f in faces:
        for a, b in zip(f, f[1:] + f[:1]):
            edges.add((min(a, b), max(a, b)))
    edges = np.array(sorted(edges), dtype=int)
    dirs: list[np.ndarray] = []
    for a, b in edges:
        d = v[b] - v[a]
        d /= np.linalg.norm(d)
        if not any(abs(abs(d @ e) - 1.0) < 1e-9 for e in dirs):
            dirs.append(d)

    volume = _closed_form_volume(kind)
    for arr in (v, normals, edges):
        arr.setflags(write=False)
    edge_dirs = np.array(dirs)
    edge_dirs.setflags(write=False)
    spec = PlatonicSpec(
        kind=kind,
        vertices=v,
        faces=tuple(tuple(f) for f in faces),
        normals=normals,
        rho=rho,
        volume=volume,
        edges=edges,
        edge_dirs=edge_dirs,
    )
    _check_platonic(spec)
    return spec


def _check_platonic(spec: PlatonicSpec) -> None:
    radii = np.linalg.norm(spec.vertices, axis=1)
    if np.max(np.abs(radii - 1.0)) > 1e-15:
        raise AssertionError(f"{spec.kind}: vertices not on the unit sphere")
    for k, f in enumerate(spec.faces):
        dev = spec.normals[k] @ spec.vertices[list(f)].T + spec.rho
        if np.max(np.abs(dev)) > 1e-14:
            raise AssertionError(f"{spec.kind}: face {k} not coplanar at the inradius")
    if abs(face_sum_volume(spec.vertices, spec.faces) - spec.volume) > 1e-14:
        raise AssertionError(f"{spec.kind}: volume mismatch")


def rotation_zyx(theta: float, iota: float, kappa: float) -> np.ndarray:
    """Rz(theta) @ Ry(iota) @ Rx(kappa)."""
    ct, st = math.cos(theta), math.sin(theta)
    ci, si = math.cos(iota), math.sin(iota)
    ck, sk = math.cos(kappa), math.sin(kappa)
    return np.array(
        [
            [ct * ci, ct * si * sk - st * ck, ct * si * ck + st * sk],
            [st * ci, st * si * sk + ct * ck, st * si * ck - ct * sk],
            [-si, ci * sk, ci * ck],
        ]
    )


def rotation_zyx_batch(angles: np.ndarray) -> np.ndarray:
    """Vectorized ``rotation_zyx`` over the leading axes of ``angles[..., 3]``."""
    t, i, k = angles[..., 0], angles[..., 1], angles[..., 2]
    ct, st, ci, si, ck, sk = np.cos(t), np.sin(t), np.cos(i), np.sin(i), np.cos(k), np.sin(k)
    rows = [
        [ct * ci, ct * si * sk - st * ck, ct * si * ck + st * sk],
        [st * ci, st * si * sk + ct * ck, st * si * ck - ct * sk],
        [-si, ci * sk, ci * ck],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def rotation_zyx_derivatives(angles: np.ndarray) -> np.ndarray:
    """Partial derivatives of ``rotation_zyx_batch``; shape ``(..., 3, 3, 3)``.

    The first trailing axis indexes the angle (theta, iota, kappa).
    """
    t, i, k = angles[..., 0], angles[..., 1], angles[..., 2]
    ct, st, ci, si, ck, sk = np.cos(t), np.sin(t), np.cos(i), np.sin(i), np.cos(k), np.sin(k)
    z = np.zeros_like(t)
    d_t = [
        [-st * ci, -st * si * sk - ct * ck, -st * si * ck + ct * sk],
        [ct * ci, ct * si * sk - st * ck, ct * si * ck + st * sk],
        [z, z, z],
    ]
    d_i = [
        [-ct * si, ct * ci * sk, ct * ci * ck],
        [-st * si, st * ci * sk, st * ci * ck],
        [-ci, -si * sk, -si * ck],
    ]
    d_k = [
        [z, ct * si * ck + st * sk, -ct * si * sk + st * ck],
        [z, st * si * ck - ct * sk, -st * si * sk - ct * ck],
        [z, ci * ck, -ci * sk],
    ]
    mats = [np.stack([np.stack(r, axis=-1) for r in d], axis=-2) for d in (d_t, d_i, d_k)]
    return np.stack(mats, axis=-3)


def rotate_zyx(pose: Pose3, v) -> np.ndarray:
    return rotation_zyx(pose.theta, pose.iota, pose.kappa) @ np.asarray(v, dtype=float)


def polygon_halfspace(pose: Pose2, spec: RegularPolygonSpec, j: int) -> tuple[float, float, float]:
    if not 0 <= j < spec.m:
        raise IndexError(j)
    ang = pose.theta + j * spec.phi
    a, b = math.sin(ang), math.cos(ang)
    return a, b, a * pose.x + b * pose.y - spec.rho


def solid_halfspace(pose: Pose3, spec: PlatonicSpec, f: int) -> tuple[float, float, float, float]:
    a, b, c = rotate_zyx(pose, spec.normals[f])
    return a, b, c, a * pose.x + b * pose.y + c * pose.z - spec.rho


def polygon_vertices(pose: Pose2, spec: RegularPolygonSpec, scale: float = 1.0) -> np.ndarray:
    return pose.center + scale * spec.vertices(pose.theta)


def solid_vertices(pose: Pose3, spec: PlatonicSpec, scale: float = 1.0) -> np.ndarray:
    rot = rotation_zyx(*pose.angles)
    return pose.center + scale * spec.vertices @ rot.T


def projection_gap(verts_a: np.ndarray, verts_b: np.ndarray, axes: np.ndarray):
    """Best separating gap over ``axes`` (both orientations).

    Returns ``(margin, axis)`` where ``axis`` is oriented from ``a`` to ``b``:
    ``min(verts_b @ axis) - max(verts_a @ axis) == margin``.
    """
    pa = verts_a @ axes.T
    pb = verts_b @ axes.T
    forward = pb.min(axis=0) - pa.max(axis=0)
    backward = pa.min(axis=0) - pb.max(axis=0)
    k_f = int(np.argmax(forward))
    k_b = int(np.argmax(backward))
    if forward[k_f] >= backward[k_b]:
        return float(forward[k_f]), axes[k_f].copy()
    return float(backward[k_b]), -axes[k_b]


def sat_margin_2d(pa: Pose2, pb: Pose2, spec: RegularPolygonSpec):
    """Separating-axis margin of two congruent polygons (>= 0 iff disjoint interiors)."""
    axes = np.vstack([spec.normals(pa.theta), spec.normals(pb.theta)])
    return projection_gap(polygon_vertices(pa, spec), polygon_vertices(pb, spec), axes)


def sat_axes_3d(rot_a: np.ndarray, rot_b: np.ndarray, spec: PlatonicSpec) -> np.ndarray:
    faces = np.vstack([spec.normals @ rot_a.T, spec.normals @ rot_b.T])
    ea = spec.edge_dirs @ rot_a.T
    eb = spec.edge_dirs @ rot_b.T
    cross = np.cross(ea[:, None, :], eb[None, :, :]).reshape(-1, 3)
    norm = np.linalg.norm(cross, axis=1)
    keep = norm >= CROSS_EPS
    return np.vstack([faces, cross[keep] / norm[keep, None]])


def sat_margin_3d(pa: Pose3, pb: Pose3, spec: PlatonicSpec):
    """Separating-axis margin of two congruent solids (>= 0 iff disjoint interiors)."""
    rot_a = rotation_zyx(*pa.angles)
    rot_b = rotation_zyx(*pb.angles)
    axes = sat_axes_3d(rot_a, rot_b, spec)
    va = pa.center + spec.vertices @ rot_a.T
    vb = pb.center + spec.vertices @ rot_b.T
    return projection_gap(va, vb, axes)
