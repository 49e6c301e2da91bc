"""Double-precision feasibility checking and best-known values.

Geometry alone decides feasibility: circle walls and center distances,
S-lemma containment for the ellipse, and for polygons and solids vertex
containment plus separating-axis margins (stored Farkas multipliers are
ignored).  A residual is violated when it exceeds the tolerance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .certify import slemma_residual
from .geometry import (
    platonic_spec,
    polygon_constants,
    rotation_zyx_batch,
)
from .models import build_system, pairs
from .models.base import Instance, Solution
from .satpen import margins_2d, margins_3d

REGISTRY_FORMAT = "1"


class StructuralError(ValueError):
    """The solution does not match its instance layout."""


@dataclass
class VerifyReport:
    feasible: bool
    worst_residual: float
    worst_tag: str
    objective: float
    tolerance: float
    residuals: dict[str, float] = field(default_factory=dict)
    registry: "RegistryEntry | None" = None
    registry_delta: float | None = None
    area_cut: float | None = None

    def summary(self) -> str:
        verdict = "feasible" if self.feasible else "INFEASIBLE"
        parts = [
            f"{verdict} at tolerance {self.tolerance:g}",
            f"objective {self.objective!r}",
            f"worst residual {self.worst_residual:.3e} ({self.worst_tag})",
        ]
        if self.registry is not None:
            parts.append(f"best known {self.registry.objective!r} (delta {self.registry_delta:+.3e})")
        return "; ".join(parts)


def _structure(instance: Instance, sol: Solution):
    sys = build_system(instance)
    x = np.asarray(sol.x, dtype=float)
    if x.shape != (sys.n_vars,):
        raise StructuralError(f"expected {sys.n_vars} values for {instance.key}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise StructuralError("solution contains non-finite values")
    return sys, x


def geometric_residuals(instance: Instance, x: np.ndarray, sys=None) -> dict[str, np.ndarray]:
    """Residual arrays (feasible when ``<= 0``) keyed by constraint tag."""
    sys = sys or build_system(instance)
    lay = sys.layout
    fam = instance.family
    P = pairs(instance.n)
    I, J = P[:, 0], P[:, 1]
    out: dict[str, np.ndarray] = {}
    if instance.is_circle:
        alpha = x[lay.slice("alpha")][0] if fam == "circle_rect" else 1.0
        height = 2.0 - alpha
        p = lay.view(x, "pose")
        r = lay.view(x, "r")
        px, py = p[:, 0], p[:, 1]
        out["containment"] = np.concatenate(
            [r - px, (px + r) - alpha, r - py, (py + r) - height, -r, [alpha - 1.0, -alpha]]
        )
        out["separation"] = np.array([(r[i] + r[j]) - math.hypot(px[i] - px[j], py[i] - py[j]) for i, j in P])
    elif fam == "circle_ellipse":
        a, b = lay.view(x, "axes")
        p = lay.view(x, "pose")
        out["containment"] = np.array([slemma_residual(a, b, px, py, 1.0)[1] for px, py in p])
        out["separation"] = np.array([2.0 - math.hypot(p[i, 0] - p[j, 0], p[i, 1] - p[j, 1]) for i, j in P])
    else:
        R = x[0]
        p = lay.view(x, "pose")
        if fam == "polygon":
            inner, outer = polygon_constants(instance.m), polygon_constants(instance.l)
            ang = p[:, 2:3] + inner.delta[None, :]
            verts = p[:, None, :2] + np.stack([np.sin(ang), np.cos(ang)], axis=-1)
            out_normals, rho_l = outer.normals(), outer.rho
            margin = margins_2d(p, I, J, inner, with_grad=False) if len(P) else np.zeros(0)
        else:
            inner, outer = platonic_spec(instance.m), platonic_spec(instance.l)
            rot = rotation_zyx_batch(p[:, 3:])
            verts = p[:, None, :3] + np.einsum("icd,vd->ivc", rot, inner.vertices)
            out_normals, rho_l = outer.normals, outer.rho
            margin = margins_3d(p, I, J, inner, with_grad=False) if len(P) else np.zeros(0)
        out["containment"] = (-(R * rho_l + verts @ out_normals.T)).reshape(-1)
        out["separation"] = -margin
    return out


def verify(instance: Instance, sol: Solution, tolerance: float = 0.0, registry: "Registry | None" = None) -> VerifyReport:
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    sys, x = _structure(instance, sol)
    res = geometric_residuals(instance, x, sys)
    worst, tag = -math.inf, "none"
    summary = {}
    for k, v in res.items():
        w = float(v.max()) if v.size else -math.inf
        summary[k] = w
        if w > worst:
            worst, tag = w, k
    if worst == -math.inf:
        worst = 0.0
    objective = float(sys.objective(x)[0])
    report = VerifyReport(
        feasible=bool(worst <= tolerance),
        worst_residual=worst,
        worst_tag=tag,
        objective=objective,
        tolerance=tolerance,
        residuals=summary,
    )
    if instance.is_circle:
        r = sys.layout.view(x, "r")
        report.area_cut = float(np.sum(r * r) - 1.0 / math.pi)
    entry = (registry or default_registry()).lookup_instance(instance)
    if entry is not None:
        report.registry = entry
        report.registry_delta = objective - entry.objective
    return report


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class RegistryEntry:
    family: str
    l: str
    m: str
    n: int
    value: str
    unit: str = ""
    previous: str = ""
    source: str = ""

    @property
    def objective(self) -> float:
        v = float(self.value)
        return v * math.pi if self.unit == "pi" else v

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.family, self.l, self.m, self.n)


_COLUMNS = ("family", "l", "m", "n", "value", "unit", "previous", "source")


def _norm(v) -> str:
    return "-" if v is None else str(v)


class Registry:
    """Best-known objectives keyed by ``(family, l, m, n)``; values kept as published text."""

    def __init__(self, entries=()):
        self._entries: dict = {}
        for e in entries:
            self._entries[e.key] = e

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())

    def lookup(self, family: str, l=None, m=None, n: int = 0) -> RegistryEntry | None:
        return self._entries.get((family, _norm(l), _norm(m), int(n)))

    def lookup_instance(self, instance: Instance) -> RegistryEntry | None:
        return self.lookup(instance.family, instance.l, instance.m, instance.n)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Registry":
        if path is None:
            text = resources.files("packnlp").joinpath("data/registry.tsv").read_text()
        else:
            text = Path(path).read_text()
        return cls.parse(text)

    @classmethod
    def parse(cls, text: str) -> "Registry":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        reader = csv.DictReader(lines, delimiter="\t")
        if tuple(reader.fieldnames or ()) != _COLUMNS:
            raise ValueError(f"unexpected registry columns {reader.fieldnames}")
        return cls(
            RegistryEntry(
                family=row["family"],
                l=row["l"],
                m=row["m"],
                n=int(row["n"]),
                value=row["value"],
                unit=row["unit"],
                previous=row["previous"],
                source=row["source"],
            )
            for row in reader
        )

    def dumps(self) -> str:
        out = [f"# packnlp best-known values, format {REGISTRY_FORMAT}", "\t".join(_COLUMNS)]
        for e in self._entries.values():
            out.append("\t".join([e.family, e.l, e.m, str(e.n), e.value, e.unit, e.previous, e.source]))
        return "\n".join(out) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


_DEFAULT: Registry | None = None


def default_registry() -> Registry:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Registry.load()
    return _DEFAULT


def registry_lookup(family: str, l=None, m=None, n: int = 0) -> RegistryEntry | None:
    """Published best-known entry, with Platonic kinds given by name or type number."""
    if family == "platonic":
        from .geometry import platonic_kind

        l, m = platonic_kind(l), platonic_kind(m)
    return default_registry().lookup(family, l, m, n)
