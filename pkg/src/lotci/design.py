"""Parameter-space geometry: neighborhoods, constraints and try-point designs.

Points are plain 1-d float arrays. A :class:`Region` is an axis-aligned box
plus optional membership constraints; designs live in the unit cube and are
mapped affinely onto the free axes of a region.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EQ_TOL = 1e-10
GRID_CAP = 10**6


class DesignError(ValueError):
    pass


class SizeLimitError(DesignError):
    pass


class InfeasibleError(DesignError):
    pass


@dataclass(frozen=True)
class Constraint:
    """Named membership predicate.

    kinds
    -----
    ``simplex``      coordinates in ``indices`` (all when None) are positive and sum to one
    ``nonnegative``  coordinates in ``indices`` are >= 0
    ``fixed``        coordinates in ``indices`` equal ``values``
    ``upper``        coordinates in ``indices`` are <= ``values``
    """

    kind: str
    indices: tuple[int, ...] | None = None
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("simplex", "nonnegative", "fixed", "upper"):
            raise DesignError(f"unknown constraint kind {self.kind!r}")
        if self.kind in ("fixed", "upper"):
            if self.indices is None or self.values is None or len(self.indices) != len(self.values):
                raise DesignError(f"{self.kind} constraint needs matching indices and values")

    def _idx(self, q: int) -> np.ndarray:
        if self.indices is None:
            return np.arange(q)
        return np.asarray(self.indices, dtype=int)

    def contains(self, x: np.ndarray, tol: float = EQ_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        sub = x[self._idx(x.size)]
        if self.kind == "simplex":
            return bool(np.all(sub > 0) and abs(sub.sum() - 1.0) <= tol)
        if self.kind == "nonnegative":
            return bool(np.all(sub >= 0))
        vals = np.asarray(self.values, dtype=float)
        if self.kind == "fixed":
            return bool(np.all(np.abs(sub - vals) <= tol))
        return bool(np.all(sub <= vals + tol))

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the constraint set (closed form for every kind)."""
        x = np.array(x, dtype=float)
        idx = self._idx(x.size)
        if self.kind == "simplex":
            x[idx] = project_simplex(x[idx])
        elif self.kind == "nonnegative":
            x[idx] = np.maximum(x[idx], 0.0)
        elif self.kind == "fixed":
            x[idx] = self.values
        else:
            x[idx] = np.minimum(x[idx], self.values)
        return x

    def to_dict(self) -> dict:
        return {"kind": self.kind, "indices": self.indices, "values": self.values}


def project_simplex(v: np.ndarray) -> np.ndarray:
    # sort-based projection onto {x >= 0, sum x = 1}
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1.0), 0.0)


@dataclass(frozen=True)
class Region:
    lower: np.ndarray
    upper: np.ndarray
    constraints: tuple[Constraint, ...] = ()
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size == 0:
            raise DesignError("lower and upper must be non-empty and of equal length")
        if np.any(lo > hi):
            raise DesignError("lower must not exceed upper")
        if self.labels is not None and len(self.labels) != lo.size:
            raise DesignError("labels length must match dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def in_box(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def contains(self, x: np.ndarray) -> bool:
        return self.in_box(x) and all(c.contains(x) for c in self.constraints)

    def with_constraint(self, constraint: Constraint | None) -> Region:
        if constraint is None:
            return self
        return Region(self.lower, self.upper, self.constraints + (constraint,), self.labels)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def project(self, x: np.ndarray) -> np.ndarray:
        """Nearest feasible point; exact for a single constraint of any supported kind."""
        x = self.clip(x)
        for c in self.constraints:
            if c.kind == "simplex":
                x = _project_simplex_box(x, c._idx(x.size), self.lower, self.upper)
            else:
                x = self.clip(c.project(x))
        return x

    def free_axes(self) -> np.ndarray:
        """Axes a unit design is mapped onto.

        Zero-width axes and axes pinned by a ``fixed`` constraint are excluded;
        under a simplex constraint the last free simplex axis is dropped because
        it is completed as one minus the others.
        """
        free = self.upper > self.lower
        for c in self.constraints:
            if c.kind == "fixed":
                free[list(c.indices)] = False
        for c in self.constraints:
            if c.kind == "simplex":
                sx = [i for i in c._idx(self.dim) if free[i]]
                if sx:
                    free[sx[-1]] = False
        return np.flatnonzero(free)

    def completion_axis(self) -> int | None:
        for c in self.constraints:
            if c.kind == "simplex":
                free = [i for i in c._idx(self.dim) if self.upper[i] > self.lower[i]]
                return free[-1] if free else None
        return None

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "constraints": [c.to_dict() for c in self.constraints],
        }


def _project_simplex_box(x, idx, lower, upper, iters=200):
    # bisection on the shift s with sum(clip(x - s, lo, hi)) = 1
    x = np.array(x, dtype=float)
    lo, hi = np.maximum(lower[idx], 0.0), upper[idx]
    if lo.sum() > 1 + EQ_TOL or hi.sum() < 1 - EQ_TOL:
        raise InfeasibleError("simplex does not meet the box")
    v = x[idx]
    a, b = np.min(v - hi) - 1.0, np.max(v - lo) + 1.0
    for _ in range(iters):
        s = 0.5 * (a + b)
        if np.clip(v - s, lo, hi).sum() > 1.0:
            a = s
        else:
            b = s
    y = np.clip(v - 0.5 * (a + b), lo, hi)
    y[-1] += 1.0 - y.sum()
    x[idx] = y
    return x


@dataclass(frozen=True)
class UnitDesign:
    points: np.ndarray  # (L, q), entries in [0, 1]
    kind: str = "grid"

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def empty(cls, q: int) -> UnitDesign:
        return cls(np.empty((0, q)), "empty")


@dataclass
class TryDesign:
    """Try points; row 0 is the (feasible) center."""

    points: np.ndarray  # (L + 1, dim)
    labels: tuple[str, ...] | None = None
    center_index: int = 0
    center_projected: bool = False

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, i):
        return self.points[i]

    def extend(self, extra: np.ndarray) -> TryDesign:
        return TryDesign(np.vstack([self.points, np.atleast_2d(extra)]), self.labels, 0, self.center_projected)

    def to_csv(self) -> str:
        return design_to_csv(self.points, self.labels)


def grid_design(U: int, q: int, cap: int = GRID_CAP) -> UnitDesign:
    if U < 1 or q < 1:
        raise DesignError("U and q must be positive")
    if U**q > cap:
        raise SizeLimitError(f"grid of U^q = {U**q} points exceeds cap {cap}")
    levels = (2.0 * np.arange(1, U + 1) - 1.0) / (2.0 * U)
    mesh = np.meshgrid(*([levels] * q), indexing="ij")
    return UnitDesign(np.stack([m.ravel() for m in mesh], axis=1), "grid")


def lhd_design(L: int, q: int, seed) -> UnitDesign:
    """Midpoint Latin hypercube: column j puts point i at the centre of stratum perm_j(i)."""
    if L < 1 or q < 1:
        raise DesignError("L and q must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    strata = np.stack([rng.permutation(L) for _ in range(q)], axis=1)
    return UnitDesign((strata + 0.5) / L, "latin-hypercube")


def map_to_region(design: UnitDesign, box: Region) -> np.ndarray:
    if design.dim != box.dim:
        raise DesignError(f"design dimension {design.dim} != box dimension {box.dim}")
    return box.lower + design.points * (box.upper - box.lower)


def filter_feasible(points: np.ndarray, region: Region) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    keep = [i for i, x in enumerate(points) if region.contains(x)]
    return points[keep].reshape(len(keep), points.shape[1])


def design_dim(region: Region) -> int:
    return int(region.free_axes().size)


def expand_design(design: UnitDesign, region: Region, center: np.ndarray) -> np.ndarray:
    """Map a design over the free axes; other axes follow the center, simplex completion included."""
    axes = region.free_axes()
    if design.dim != axes.size:
        raise DesignError(f"design dimension {design.dim} != free dimension {axes.size}")
    pts = np.tile(np.asarray(center, dtype=float), (design.size, 1))
    if design.size == 0:
        return pts
    sub = Region(region.lower[axes], region.upper[axes])
    pts[:, axes] = map_to_region(design, sub)
    comp = region.completion_axis()
    if comp is not None:
        simplex = next(c for c in region.constraints if c.kind == "simplex")
        others = [i for i in simplex._idx(region.dim) if i != comp]
        pts[:, comp] = 1.0 - pts[:, others].sum(axis=1)
    return pts


def build_try_design(center: np.ndarray, region: Region, design: UnitDesign) -> TryDesign:
    center = np.asarray(center, dtype=float)
    projected = False
    if not region.contains(center):
        center = region.project(center)
        projected = True
        if not region.contains(center):
            raise InfeasibleError("no feasible point in region")
    cand = filter_feasible(expand_design(design, region, center), region)
    if cand.size:
        cand = cand[~np.all(np.abs(cand - center) <= 0.0, axis=1)]
    return TryDesign(np.vstack([center[None, :], cand]), region.labels, 0, projected)


def make_unit_design(spec: dict | None, q: int, seed=None) -> UnitDesign:
    """Unit design from a config dict such as ``{"kind": "grid", "U": 3}`` or ``{"kind": "lhd", "L": 30}``."""
    if not spec or spec.get("kind", "center") in ("center", "none") or q == 0:
        return UnitDesign.empty(q)
    kind = spec["kind"]
    if kind == "grid":
        return grid_design(int(spec["U"]), q, int(spec.get("cap", GRID_CAP)))
    if kind in ("lhd", "latin-hypercube"):
        return lhd_design(int(spec["L"]), q, seed)
    raise DesignError(f"unknown design kind {kind!r}")


def design_to_csv(points: np.ndarray, labels: Sequence[str] | None = None) -> str:
    points = np.atleast_2d(points)
    if labels is None:
        labels = [f"x{j + 1}" for j in range(points.shape[1])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(labels)
    for row in points:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def design_from_csv(text: str) -> tuple[np.ndarray, list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    return np.array([[float(v) for v in r] for r in rows[1:]]), rows[0]
