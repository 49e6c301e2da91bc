"""Versioned JSON solution files.

Floats are written with Python's shortest round-trip representation (at
most 17 significant digits), so reading a file back reproduces every value
bit for bit.  Files hold the instance, one value per named variable, the
objective, solver metadata and, when available, containment and separation
certificates.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..certify import CertificateError, ellipse_certificates, farkas_certificates
from ..models import build_system
from ..models.base import Instance, Solution

SOLUTION_FORMAT = "packnlp-solution"
SOLUTION_VERSION = 1


class SolutionFileError(ValueError):
    """The file is not a readable solution of a supported version."""


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(w) for w in v]
    if isinstance(v, np.ndarray):
        return [_plain(w) for w in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no infinities; store them as strings
        return v if math.isfinite(v) else repr(v)
    return v


def compute_certificates(sol: Solution) -> dict | None:
    """Farkas multipliers for bodies, S-lemma multipliers for the ellipse."""
    inst = sol.instance
    try:
        if inst.is_body:
            return {"farkas": [c.to_dict() for c in farkas_certificates(inst, sol.x)]}
        if inst.family == "circle_ellipse":
            certs = ellipse_certificates(inst, sol.x)
            return {"slemma": [None if c is None else c.to_dict() for c in certs]}
    except CertificateError as exc:
        return {"error": str(exc)}
    return None


def solution_to_dict(sol: Solution, certificates: bool = True) -> dict:
    sys = build_system(sol.instance)
    x = np.asarray(sol.x, dtype=float)
    if x.shape != (sys.n_vars,):
        raise SolutionFileError(f"solution has {x.size} values, layout expects {sys.n_vars}")
    certs = sol.certificates
    if certs is None and certificates:
        certs = compute_certificates(sol)
    return {
        "format": SOLUTION_FORMAT,
        "version": SOLUTION_VERSION,
        "instance": sol.instance.to_dict(),
        "objective": _plain(sol.objective),
        "variables": {label: _plain(v) for label, v in zip(sys.layout.labels, x)},
        "meta": _plain(sol.meta),
        "certificates": _plain(certs),
    }


def _float(v) -> float:
    if isinstance(v, str):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SolutionFileError(f"expected a number, got {v!r}")
    return float(v)


def solution_from_dict(d: dict) -> Solution:
    if not isinstance(d, dict) or d.get("format") != SOLUTION_FORMAT:
        raise SolutionFileError("not a packnlp solution file")
    if d.get("version") != SOLUTION_VERSION:
        raise SolutionFileError(f"unsupported solution file version {d.get('version')!r}")
    try:
        instance = Instance.from_dict(d["instance"])
        sys = build_system(instance)
        values = d["variables"]
        labels = sys.layout.labels
        if list(values) != labels:
            raise SolutionFileError("variable names do not match the instance layout")
        x = np.array([_float(values[k]) for k in labels])
        objective = _float(d["objective"])
    except SolutionFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SolutionFileError(f"malformed solution file: {exc}") from exc
    return Solution(instance, x, objective, meta=dict(d.get("meta") or {}), certificates=d.get("certificates"))


def dumps(sol: Solution, certificates: bool = True) -> str:
    return json.dumps(solution_to_dict(sol, certificates), indent=1) + "\n"


def loads(text: str) -> Solution:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SolutionFileError(f"invalid JSON: {exc}") from exc
    return solution_from_dict(data)


def write_solution(sol: Solution, path: str | Path, certificates: bool = True) -> None:
    Path(path).write_text(dumps(sol, certificates))


def read_solution(path: str | Path) -> Solution:
    return loads(Path(path).read_text())
