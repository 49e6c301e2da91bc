"""Formulation comparison over an instance grid.

Every grid instance is solved once per variant; each variant is then scored
against ``dist`` on the instances both solved: the count of solved
instances, median and mean relative objective difference, and how often the
variant is strictly better or worse.
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass, field
from itertools import product

from ..models.base import VARIANTS, Instance
from ..solver import SolverConfig, multistart

REFERENCE = "dist"
# objectives closer than this (relative) count as ties
TIE_TOL = 1e-7
METRICS = ("found", "median", "mean", "better", "worse")


def _expand(values: str) -> list[str]:
    out: list[str] = []
    for part in values.split(","):
        part = part.strip()
        m = re.fullmatch(r"(\d+)\.\.(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty range {part!r}")
            out += [str(v) for v in range(lo, hi + 1)]
        elif part:
            out.append(part)
    if not out:
        raise ValueError(f"no values in {values!r}")
    return out


def parse_grid(text: str) -> dict[str, list[str]]:
    """Parse ``"l=3..5 m=3,4 n=2..6"`` (``;`` also separates) into value lists."""
    grid: dict[str, list[str]] = {}
    for token in re.split(r"[;\s]+", text.strip()):
        if not token:
            continue
        key, sep, values = token.partition("=")
        if not sep or key not in ("l", "m", "n"):
            raise ValueError(f"bad grid entry {token!r}; expected l=..., m=... or n=...")
        grid[key] = _expand(values)
    if "n" not in grid:
        raise ValueError("grid needs an n=... entry")
    return grid


def grid_instances(family: str, grid: dict[str, list[str]], variant: str = REFERENCE) -> list[Instance]:
    def shape(v: str):
        return int(v) if v.isdigit() and family == "polygon" else v

    ls = grid.get("l", [None]) if family in ("polygon", "platonic") else [None]
    ms = grid.get("m", [None]) if family in ("polygon", "platonic") else [None]
    return [
        Instance(family, n=int(n), m=None if m is None else shape(m), l=None if l is None else shape(l), variant=variant)
        for l, m, n in product(ls, ms, grid["n"])
    ]


@dataclass
class BenchResult:
    family: str
    variants: list[str]
    instances: list[str] = field(default_factory=list)
    objectives: dict[str, list[float | None]] = field(default_factory=dict)
    sense: str = "min"

    def scores(self) -> dict[str, dict[str, float | int | None]]:
        ref = self.objectives[REFERENCE]
        out = {}
        for v in self.variants:
            vals = self.objectives[v]
            rel, better, worse = [], 0, 0
            for a, r in zip(vals, ref):
                if a is None or r is None:
                    continue
                # positive differences mean worse than the reference in either sense
                d = (a - r) / abs(r) if self.sense == "min" else (r - a) / abs(r)
                rel.append(d)
                if d < -TIE_TOL:
                    better += 1
                elif d > TIE_TOL:
                    worse += 1
            out[v] = {
                "found": sum(a is not None for a in vals),
                "median": statistics.median(rel) if rel else None,
                "mean": statistics.fmean(rel) if rel else None,
                "better": better,
                "worse": worse,
            }
        return out

    def table(self) -> str:
        scores = self.scores()
        width = max(9, *(len(v) + 1 for v in self.variants))
        lines = ["metric".ljust(8) + "".join(v.rjust(width) for v in self.variants)]
        for metric in METRICS:
            cells = []
            for v in self.variants:
                s = scores[v][metric]
                if metric in ("median", "mean"):
                    cells.append("n/a" if s is None else f"{100 * s:+.3f}%")
                else:
                    cells.append(str(s))
            lines.append(metric.ljust(8) + "".join(c.rjust(width) for c in cells))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "variants": self.variants,
            "instances": self.instances,
            "objectives": self.objectives,
            "scores": self.scores(),
        }


def run_bench(
    family: str,
    grid: dict[str, list[str]],
    variants=VARIANTS,
    config: SolverConfig | None = None,
    progress=None,
) -> BenchResult:
    variants = list(variants)
    if REFERENCE not in variants:
        variants.insert(0, REFERENCE)
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ValueError(f"unknown variants {sorted(unknown)}")
    if family not in ("polygon", "platonic"):
        raise ValueError("formulation variants exist only for the polygon and platonic families")
    config = config or SolverConfig()
    base = grid_instances(family, grid)
    result = BenchResult(family, variants, [inst.key.rsplit("-", 1)[0] for inst in base])
    result.sense = base[0].sense
    for v in variants:
        vals: list[float | None] = []
        for inst in base:
            report = multistart(Instance(inst.family, inst.n, inst.m, inst.l, variant=v, epsilon=inst.epsilon), config)
            vals.append(report.best.objective if report.best is not None else None)
            if progress:
                progress(v, inst, vals[-1])
        result.objectives[v] = vals
    return result
