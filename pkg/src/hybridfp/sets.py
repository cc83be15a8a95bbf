"""Feasible sets: norm balls, boxes, and intersections with half-spaces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .space import SpaceDescriptor

DEFAULT_MEMBERSHIP_TOL = 1e-12


@dataclass(frozen=True)
class HalfSpace:
    """The set {z : 2 <z, normal> <= offset}, with ``normal`` in E*.

    ``index`` records the outer iteration that produced the cut (0 for
    hand-built constraints).
    """

    normal: np.ndarray
    offset: float
    index: int = 0

    def __post_init__(self):
        c = np.asarray(self.normal, dtype=np.float64)
        if c.ndim != 1 or not np.all(np.isfinite(c)) or not np.isfinite(self.offset):
            raise ValueError("half-space normal and offset must be finite")
        object.__setattr__(self, "normal", c)
        object.__setattr__(self, "offset", float(self.offset))

    def slack(self, z) -> float:
        """offset - 2<z, normal>; nonnegative iff z is in the half-space."""
        return self.offset - 2.0 * float(np.dot(z, self.normal))


@dataclass(frozen=True)
class Ball:
    """Closed ball {x : ||x - center|| <= radius} in the norm of ``space``."""

    space: SpaceDescriptor
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", self.space.check(self.center))
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be positive, got {self.radius!r}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def centered(self) -> bool:
        return not np.any(self.center)

    def slack(self, x) -> float:
        return self.radius - self.space.norm(np.asarray(x) - self.center)

    def contains(self, x, tol: float = DEFAULT_MEMBERSHIP_TOL) -> bool:
        return self.slack(x) >= -tol

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = self.space.dim
        g = rng.normal(size=(n, d))
        norms = np.array([self.space.norm(v) for v in g])
        norms[norms == 0] = 1.0
        rad = self.radius * rng.uniform(size=n) ** (1.0 / d)
        return self.center + g / norms[:, None] * rad[:, None]

    def boundary_points(self) -> np.ndarray:
        eye = np.eye(self.space.dim) * self.radius
        return np.vstack([self.center + eye, self.center - eye])

    def interior_point(self) -> np.ndarray:
        return self.center.copy()


@dataclass(frozen=True)
class Box:
    """Axis-aligned box lower <= x <= upper."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(lo > hi):
            raise ValueError("box bounds must be finite with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def slack(self, x) -> float:
        x = np.asarray(x)
        return float(min(np.min(x - self.lower), np.min(self.upper - x)))

    def contains(self, x, tol: float = DEFAULT_MEMBERSHIP_TOL) -> bool:
        return self.slack(x) >= -tol

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.lower.size))

    def boundary_points(self) -> np.ndarray:
        mid = 0.5 * (self.lower + self.upper)
        pts = []
        for i in range(mid.size):
            for end in (self.lower[i], self.upper[i]):
                v = mid.copy()
                v[i] = end
                pts.append(v)
        return np.array(pts)

    def interior_point(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class Region:
    """A base set cut by a ledger of half-spaces."""

    base: Ball | Box
    constraints: tuple[HalfSpace, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def with_constraint(self, h: HalfSpace) -> "Region":
        return Region(self.base, self.constraints + (h,))

    def ledger_slacks(self, x) -> np.ndarray:
        if not self.constraints:
            return np.zeros(0)
        c = np.array([h.normal for h in self.constraints])
        b = np.array([h.offset for h in self.constraints])
        return b - 2.0 * (c @ np.asarray(x))

    def slack(self, x) -> float:
        s = self.base.slack(x)
        if self.constraints:
            s = min(s, float(np.min(self.ledger_slacks(x))))
        return s

    def contains(self, x, tol: float = DEFAULT_MEMBERSHIP_TOL) -> bool:
        return self.slack(x) >= -tol

    def pull_inside(self, points: np.ndarray, anchor: np.ndarray) -> np.ndarray:
        """Move each base point toward ``anchor`` until it satisfies the ledger.

        ``anchor`` must be feasible. Points already feasible are kept; the rest
        land on the ledger boundary along the segment to the anchor.
        """
        if not self.constraints:
            return points
        c = np.array([h.normal for h in self.constraints])
        b = np.array([h.offset for h in self.constraints])
        a_slack = b - 2.0 * (c @ anchor)
        out = []
        for y in points:
            y_slack = b - 2.0 * (c @ y)
            t = 1.0
            bad = y_slack < 0
            if np.any(bad):
                # slack is affine along the segment: a + t (y - a)
                denom = a_slack[bad] - y_slack[bad]
                ratio = np.divide(a_slack[bad], denom, out=np.zeros_like(denom), where=denom > 0)
                t = float(np.min(ratio))
                t = min(max(t, 0.0), 1.0)
            out.append(anchor + t * (y - anchor))
        return np.array(out)


def as_region(C) -> Region:
    return C if isinstance(C, Region) else Region(C)
