"""Instances, variable layouts and the block-structured constraint system."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable

import numpy as np
from scipy import sparse

from ..geometry import InvalidShapeError, platonic_kind

FAMILIES = ("circle_square", "circle_rect", "circle_ellipse", "polygon", "platonic")
VARIANTS = ("dist", "nodist", "inner", "farkas", "sym")
SYMMETRY_MODES = ("none", "centroid", "sort_x", "generic_line")
TAGS = (
    "containment",
    "separation",
    "farkas_sum",
    "halfspace",
    "distance",
    "symmetry",
    "area",
    "strengthening",
)


class InvalidInstanceError(ValueError):
    pass


@dataclass(frozen=True)
class EllipseOptions:
    strengthening: bool = True
    symmetry: str = "none"
    line: tuple[float, float] = (2.0, 3.0)

    def __post_init__(self):
        if self.symmetry not in SYMMETRY_MODES:
            raise InvalidInstanceError(f"unknown symmetry mode {self.symmetry!r}")


@dataclass(frozen=True)
class Instance:
    """One packing problem.

    ``m`` and ``l`` are polygon orders for ``polygon`` and solid names for
    ``platonic``; circle families ignore them.
    """

    family: str
    n: int
    m: int | str | None = None
    l: int | str | None = None
    variant: str = "dist"
    epsilon: float = 1e-8
    ellipse: EllipseOptions = field(default_factory=EllipseOptions)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInstanceError(f"unknown family {self.family!r}")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidInstanceError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.variant not in VARIANTS:
            raise InvalidInstanceError(f"unknown variant {self.variant!r}")
        if self.epsilon < 0:
            raise InvalidInstanceError("epsilon must be nonnegative")
        if self.family == "polygon":
            for v in (self.m, self.l):
                if v is None or int(v) != v or v < 3:
                    raise InvalidShapeError(f"polygon orders must be integers >= 3, got {v!r}")
            object.__setattr__(self, "m", int(self.m))
            object.__setattr__(self, "l", int(self.l))
        elif self.family == "platonic":
            object.__setattr__(self, "m", platonic_kind(self.m))
            object.__setattr__(self, "l", platonic_kind(self.l))
        else:
            object.__setattr__(self, "m", None)
            object.__setattr__(self, "l", None)

    @property
    def is_circle(self) -> bool:
        return self.family in ("circle_square", "circle_rect")

    @property
    def is_body(self) -> bool:
        return self.family in ("polygon", "platonic")

    @property
    def sense(self) -> str:
        return "max" if self.is_circle else "min"

    @property
    def key(self) -> str:
        parts = [self.family]
        if self.is_body:
            parts += [f"l{self.l}", f"m{self.m}"]
        parts.append(f"n{self.n}")
        if self.is_body:
            parts.append(self.variant)
        return "-".join(parts)

    def with_epsilon(self, epsilon: float) -> "Instance":
        return replace(self, epsilon=epsilon)

    def to_dict(self) -> dict:
        d = {
            "family": self.family,
            "n": self.n,
            "m": self.m,
            "l": self.l,
            "variant": self.variant,
            "epsilon": self.epsilon,
        }
        if self.family == "circle_ellipse":
            d["ellipse"] = {
                "strengthening": self.ellipse.strengthening,
                "symmetry": self.ellipse.symmetry,
                "line": list(self.ellipse.line),
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        opts = d.get("ellipse")
        ellipse = EllipseOptions(
            strengthening=opts["strengthening"], symmetry=opts["symmetry"], line=tuple(opts["line"])
        ) if opts else EllipseOptions()
        return cls(
            family=d["family"],
            n=d["n"],
            m=d.get("m"),
            l=d.get("l"),
            variant=d.get("variant", "dist"),
            epsilon=d.get("epsilon", 1e-8),
            ellipse=ellipse,
        )


def pairs(n: int) -> np.ndarray:
    """Lexicographic ``i < j`` pairs as an ``(P, 2)`` integer array."""
    if n < 2:
        return np.zeros((0, 2), dtype=int)
    return np.array(list(combinations(range(n), 2)), dtype=int)


class Layout:
    """Named blocks of a flat decision vector."""

    def __init__(self):
        self._blocks: dict[str, tuple[slice, tuple[int, ...]]] = {}
        self._labels: list[str] = []
        self.size = 0

    def add(self, name: str, shape: tuple[int, ...] | int, labels: list[str] | None = None) -> slice:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        sl = slice(self.size, self.size + count)
        self._blocks[name] = (sl, shape)
        if labels is None:
            labels = [f"{name}[{','.join(map(str, ix))}]" for ix in np.ndindex(*shape)]
        self._labels.extend(labels)
        self.size += count
        return sl

    def __contains__(self, name: str) -> bool:
        return name in self._blocks

    @property
    def names(self) -> list[str]:
        return list(self._blocks)

    def slice(self, name: str) -> slice:
        return self._blocks[name][0]

    def shape(self, name: str) -> tuple[int, ...]:
        return self._blocks[name][1]

    def view(self, x: np.ndarray, name: str) -> np.ndarray:
        sl, shape = self._blocks[name]
        return x[sl].reshape(shape)

    def index(self, name: str) -> np.ndarray:
        """Flat variable indices of a block, shaped like the block."""
        sl, shape = self._blocks[name]
        return np.arange(sl.start, sl.stop).reshape(shape)

    @property
    def labels(self) -> list[str]:
        return list(self._labels)


@dataclass
class Block:
    """A group of residual rows sharing one evaluation kernel.

    ``cols[r]`` lists the variables row ``r`` may depend on (``-1`` pads);
    ``func(x)`` returns row values and the matching ``(rows, k)`` partials.
    """

    name: str
    tag: str
    cols: np.ndarray
    func: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    equality: bool = False

    @property
    def rows(self) -> int:
        return self.cols.shape[0]


class ConstraintSystem:
    """Objective, residuals ``g(x)`` and bounds of one built instance.

    Inequality rows are satisfied when ``g_i(x) <= 0`` and equality rows
    when ``g_i(x) == 0``.
    """

    def __init__(
        self,
        instance: Instance,
        layout: Layout,
        lower: np.ndarray,
        upper: np.ndarray,
        blocks: list[Block],
        objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
        constants: dict | None = None,
    ):
        self.instance = instance
        self.layout = layout
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.blocks = [b for b in blocks if b.rows > 0]
        self._objective = objective
        self.constants = constants or {}
        self.sense = instance.sense

        offsets = np.cumsum([0] + [b.rows for b in self.blocks])
        self.block_rows = {b.name: slice(offsets[k], offsets[k + 1]) for k, b in enumerate(self.blocks)}
        self.n_rows = int(offsets[-1])
        self.tags = np.array([b.tag for b in self.blocks for _ in range(b.rows)], dtype=object)
        self.equality = np.array([b.equality for b in self.blocks for _ in range(b.rows)], dtype=bool)

        rows, cols = [], []
        for k, b in enumerate(self.blocks):
            r = np.repeat(np.arange(offsets[k], offsets[k + 1]), b.cols.shape[1])
            rows.append(r)
            cols.append(b.cols.reshape(-1))
        rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
        cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        self._valid = cols >= 0
        self.jac_rows = rows[self._valid]
        self.jac_cols = cols[self._valid]

    @property
    def n_vars(self) -> int:
        return self.layout.size

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_vars,):
            raise ValueError(f"expected vector of length {self.n_vars}, got shape {x.shape}")
        return x

    def objective(self, x) -> tuple[float, np.ndarray]:
        return self._objective(self._check(x))

    def residuals(self, x) -> np.ndarray:
        x = self._check(x)
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate([b.func(x)[0] for b in self.blocks])

    def residuals_and_jacobian_values(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = self._check(x)
        if not self.blocks:
            return np.zeros(0), np.zeros(0)
        vals, jacs = [], []
        for b in self.blocks:
            v, j = b.func(x)
            vals.append(v)
            jacs.append(np.asarray(j, dtype=float).reshape(-1))
        return np.concatenate(vals), np.concatenate(jacs)[self._valid]

    def jacobian(self, x) -> sparse.csr_matrix:
        _, vals = self.residuals_and_jacobian_values(x)
        return sparse.csr_matrix((vals, (self.jac_rows, self.jac_cols)), shape=(self.n_rows, self.n_vars))

    def violation(self, x, residuals: np.ndarray | None = None) -> np.ndarray:
        g = self.residuals(x) if residuals is None else residuals
        return np.where(self.equality, np.abs(g), np.maximum(g, 0.0))

    def max_violation(self, x) -> float:
        v = self.violation(x)
        return float(v.max()) if v.size else 0.0

    def rows_with_tag(self, *tags: str) -> np.ndarray:
        return np.flatnonzero(np.isin(self.tags, tags))

    def with_bounds(self, lower=None, upper=None) -> "ConstraintSystem":
        clone = object.__new__(ConstraintSystem)
        clone.__dict__.update(self.__dict__)
        clone.lower = self.lower.copy() if lower is None else np.asarray(lower, dtype=float)
        clone.upper = self.upper.copy() if upper is None else np.asarray(upper, dtype=float)
        return clone


@dataclass
class Solution:
    instance: Instance
    x: np.ndarray
    objective: float
    meta: dict = field(default_factory=dict)
    certificates: dict | None = None

    def copy(self) -> "Solution":
        return Solution(
            instance=self.instance,
            x=self.x.copy(),
            objective=self.objective,
            meta=dict(self.meta),
            certificates=None if self.certificates is None else dict(self.certificates),
        )


def left_sum(terms):
    """Sequential left-to-right sum (matches the exported expression order)."""
    it = iter(terms)
    acc = next(it)
    for t in it:
        acc = acc + t
    return acc


PI = math.pi
