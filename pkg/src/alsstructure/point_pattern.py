"""
Planar point patterns and their distance-based summaries.

Covers nearest-neighbour distances, the Clark-Evans aggregation index, the
Kaplan-Meier estimate of the empty-space function, the CSR reference curve,
and the two signed divergences (integrated squared difference and the
KL-type divergence) used both on field patterns and on thresholded rasters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

__all__ = [
    "Window",
    "PointPattern",
    "CurveOnGrid",
    "InsufficientPointsError",
    "DivergenceError",
    "nn_distances",
    "aggregation_index",
    "f_function_km",
    "f_theo_csr",
    "d_integrated",
    "d_kl",
    "fd_summary",
    "distance_grid",
]

# tolerance for "r on the grid" comparisons
_GRID_EPS = 1e-9


class InsufficientPointsError(ValueError):
    """Raised when a statistic needs more points than the pattern holds."""


class DivergenceError(ValueError):
    """Raised when the KL-type divergence is infinite."""


@dataclass(frozen=True)
class Window:
    """Rectangular or circular observation window.

    Use :meth:`rectangle` or :meth:`disc` to construct.
    """

    kind: str
    xrange: tuple[float, float] = (0.0, 0.0)
    yrange: tuple[float, float] = (0.0, 0.0)
    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0

    def __post_init__(self):
        if self.kind == "rectangle":
            if not (self.xrange[1] > self.xrange[0] and self.yrange[1] > self.yrange[0]):
                raise ValueError(f"degenerate rectangle {self.xrange} x {self.yrange}")
        elif self.kind == "disc":
            if not self.radius > 0:
                raise ValueError(f"disc radius must be positive, got {self.radius}")
        else:
            raise ValueError(f"unknown window kind {self.kind!r}")

    @classmethod
    def rectangle(cls, xrange, yrange) -> "Window":
        return cls("rectangle", xrange=tuple(map(float, xrange)), yrange=tuple(map(float, yrange)))

    @classmethod
    def disc(cls, center, radius) -> "Window":
        return cls("disc", center=tuple(map(float, center)), radius=float(radius))

    @property
    def area(self) -> float:
        if self.kind == "rectangle":
            return (self.xrange[1] - self.xrange[0]) * (self.yrange[1] - self.yrange[0])
        return np.pi * self.radius**2

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax)."""
        if self.kind == "rectangle":
            return (*self.xrange, *self.yrange)
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if self.kind == "rectangle":
            return (
                (xy[:, 0] >= self.xrange[0])
                & (xy[:, 0] <= self.xrange[1])
                & (xy[:, 1] >= self.yrange[0])
                & (xy[:, 1] <= self.yrange[1])
            )
        d2 = (xy[:, 0] - self.center[0]) ** 2 + (xy[:, 1] - self.center[1]) ** 2
        return d2 <= self.radius**2 * (1 + 1e-12)

    def boundary_distance(self, xy) -> np.ndarray:
        """Distance from each (inside) location to the window boundary."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if self.kind == "rectangle":
            return np.minimum.reduce([
                xy[:, 0] - self.xrange[0],
                self.xrange[1] - xy[:, 0],
                xy[:, 1] - self.yrange[0],
                self.yrange[1] - xy[:, 1],
            ])
        d = np.hypot(xy[:, 0] - self.center[0], xy[:, 1] - self.center[1])
        return self.radius - d

    def lattice(self, step: float) -> np.ndarray:
        """Square lattice of cell centres with spacing `step`, clipped to the window."""
        xmin, xmax, ymin, ymax = self.bbox
        xs = np.arange(xmin + step / 2, xmax, step)
        ys = np.arange(ymin + step / 2, ymax, step)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        return pts[self.contains(pts)]


@dataclass(frozen=True)
class PointPattern:
    """Finite point pattern observed in a window.

    Points outside the window and coincident points are rejected.
    """

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if pts.shape[0] and not np.all(self.window.contains(pts)):
            raise ValueError("all points must lie inside the window")
        if pts.shape[0] != np.unique(pts, axis=0).shape[0]:
            raise ValueError("duplicate point coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def intensity(self) -> float:
        """Estimated intensity n / |W| (points per unit area)."""
        return self.n / self.window.area


@dataclass(frozen=True)
class CurveOnGrid:
    """Function values on a strictly increasing distance grid starting at 0."""

    r: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape:
            raise ValueError("r and values must be 1-d arrays of equal length")
        if r.size == 0 or r[0] != 0 or np.any(np.diff(r) <= 0):
            raise ValueError("r grid must start at 0 and increase strictly")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    def is_cdf(self, atol=1e-12) -> bool:
        v = self.values
        return bool(
            np.all(v >= -atol) and np.all(v <= 1 + atol) and np.all(np.diff(v) >= -atol)
        )


def distance_grid(r_max: float, step: float) -> np.ndarray:
    """Grid 0, step, 2*step, ... up to and including r_max (within rounding)."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    n = int(np.floor(r_max / step + _GRID_EPS))
    return np.arange(n + 1) * step


def nn_distances(p: PointPattern) -> np.ndarray:
    """Distance from each point to its nearest other point."""
    if p.n < 2:
        raise InsufficientPointsError(f"need at least 2 points, got {p.n}")
    _, idx = cKDTree(p.points).query(p.points, k=2)
    diff = p.points - p.points[idx[:, 1]]
    return np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)


def aggregation_index(p: PointPattern) -> float:
    """Clark-Evans aggregation index.

    ``R = 2 / sqrt(n |W|) * sum_i ||x_i - nn(x_i)||``; about 1 under CSR,
    above 1 for regular and below 1 for clustered patterns.
    """
    nnd = nn_distances(p)
    return float(2.0 / np.sqrt(p.n * p.window.area) * nnd.sum())


def f_function_km(p: PointPattern, r_max: float = 4.5, grid_step: float = 0.1) -> CurveOnGrid:
    """Kaplan-Meier estimate of the empty-space function F.

    Query locations are the centres of a square lattice with spacing
    `grid_step` inside the window. For each location u, the distance to the
    nearest point d(u) is the survival time and the distance to the window
    boundary b(u) the censoring time. The product-limit estimator is
    evaluated on the grid 0, grid_step, ..., r_max.

    Parameters
    ----------
    p : PointPattern
        Non-empty pattern.
    r_max : float
        Largest distance evaluated.
    grid_step : float
        Lattice spacing and distance bin width.

    Returns
    -------
    CurveOnGrid
    """
    if p.n == 0:
        raise InsufficientPointsError("empty pattern")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    r = distance_grid(r_max, grid_step)
    u = p.window.lattice(grid_step)
    if u.shape[0] == 0:
        raise ValueError("grid_step too coarse for the window")
    d, _ = cKDTree(p.points).query(u, k=1)
    b = p.window.boundary_distance(u)
    obs = np.minimum(d, b)
    uncensored = d <= b

    # bin j covers (r[j-1], r[j]]; d == 0 falls into bin 1
    death_bin = np.searchsorted(r, d[uncensored] - _GRID_EPS, side="left")
    death_bin = np.maximum(death_bin, 1)
    deaths = np.bincount(death_bin, minlength=r.size)[: r.size]
    # at risk at the start of bin j: obs >= r[j-1]
    obs_sorted = np.sort(obs)
    at_risk = obs.size - np.searchsorted(obs_sorted, r[:-1] - _GRID_EPS, side="left")

    surv = np.ones(r.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        hazard = np.where(at_risk > 0, deaths[1:] / np.maximum(at_risk, 1), 0.0)
    surv[1:] = np.cumprod(1.0 - hazard)
    return CurveOnGrid(r, 1.0 - surv, {"estimator": "km", "n_queries": int(u.shape[0])})


def f_theo_csr(lam: float, r_grid) -> CurveOnGrid:
    """Empty-space function of a Poisson process, ``1 - exp(-lam*pi*r^2)``."""
    if lam < 0:
        raise ValueError(f"intensity must be non-negative, got {lam}")
    r = np.asarray(r_grid, dtype=float)
    return CurveOnGrid(r, -np.expm1(-lam * np.pi * r**2))


def _common_range(f: CurveOnGrid, f_ref: CurveOnGrid, r_t: float) -> np.ndarray:
    if f.r.shape != f_ref.r.shape or not np.allclose(f.r, f_ref.r, rtol=0, atol=_GRID_EPS):
        raise ValueError("curves must share the same distance grid")
    if not 0 < r_t <= f.r[-1] + _GRID_EPS:
        raise ValueError(f"r_t={r_t} outside the grid range [0, {f.r[-1]}]")
    return f.r <= r_t + _GRID_EPS


def d_integrated(f: CurveOnGrid, f_ref: CurveOnGrid, r_t: float) -> float:
    """Signed integrated squared difference of two curves on [0, r_t].

    The sign is that of ``f - f_ref`` where ``|f - f_ref|`` is largest; ties
    go to the smallest distance. Positive values mean `f` lies above the
    reference (regularity when the reference is CSR-like).
    """
    keep = _common_range(f, f_ref, r_t)
    r = f.r[keep]
    diff = f.values[keep] - f_ref.values[keep]
    i = int(np.argmax(np.abs(diff)))
    sign = np.sign(diff[i])
    if sign == 0:
        return 0.0
    return float(sign * trapezoid(diff**2, r))


def d_kl(f: CurveOnGrid, f_ref: CurveOnGrid, r_t: float) -> float:
    """KL-type divergence ``int_0^r_t f log(f / f_ref) dr``.

    Uses ``0 log(0/x) = 0``. Integration starts at the first grid point
    where the reference is positive; the r = 0 point never contributes.

    Raises
    ------
    DivergenceError
        If ``f > 0`` where ``f_ref == 0`` away from r = 0.
    """
    keep = _common_range(f, f_ref, r_t)
    r = f.r[keep]
    fv = f.values[keep]
    gv = f_ref.values[keep]
    positive = np.flatnonzero(gv > 0)
    if positive.size == 0:
        if np.any(fv[1:] > 0):
            raise DivergenceError("reference is zero where f is positive")
        return 0.0
    j0 = positive[0]
    if np.any(fv[1:j0] > 0) or np.any((fv[j0:] > 0) & (gv[j0:] <= 0)):
        raise DivergenceError("reference is zero where f is positive")
    fv, gv, r = fv[j0:], gv[j0:], r[j0:]
    if r.size < 2:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(fv > 0, fv * np.log(fv / gv), 0.0)
    return float(trapezoid(integrand, r))


def fd_summary(p: PointPattern, r_t: float = 4.5, grid_step: float = 0.1) -> float:
    """KL-type divergence of the KM empty-space function from its CSR curve.

    Positive values indicate regularity, negative values clustering.
    """
    if p.n < 2:
        raise InsufficientPointsError(f"need at least 2 points, got {p.n}")
    f = f_function_km(p, r_t, grid_step)
    f_ref = f_theo_csr(p.intensity, f.r)
    return d_kl(f, f_ref, r_t)
