"""
Synthetic stands and pulse clouds.

Point processes (Poisson, Matern II hard-core, Thomas cluster), tree height
and dbh marks, cone-shaped crowns and a simple first/last-return laser
simulator. Everything is deterministic given the seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .chm import FIRST, LAST, PlotCloud
from .point_pattern import PointPattern, Window

__all__ = [
    "Poisson",
    "Matern2",
    "Thomas",
    "StandSpec",
    "SyntheticPlot",
    "simulate_pattern",
    "simulate_heights",
    "simulate_dbh",
    "crown_surface",
    "simulate_cloud",
    "simulate_plot",
    "development_class",
    "STRUCTURES",
    "random_stand",
    "simulate_survey",
]


@dataclass(frozen=True)
class Poisson:
    intensity: float


@dataclass(frozen=True)
class Matern2:
    proposal_intensity: float
    hardcore: float


@dataclass(frozen=True)
class Thomas:
    parent_intensity: float
    mean_offspring: float
    sigma: float


@dataclass(frozen=True)
class StandSpec:
    """Stand description for the simulators.

    Heights are normal(`height_mean`, `height_sd`) truncated below at
    `height_min`; crown radius is ``crown_coef * height``.
    """

    process: Poisson | Matern2 | Thomas
    window: Window = field(default_factory=lambda: Window.disc((0.0, 0.0), 9.0))
    height_mean: float = 15.0
    height_sd: float = 3.0
    height_min: float = 1.3
    crown_coef: float = 0.15

    def __post_init__(self):
        proc = self.process
        if isinstance(proc, Poisson):
            rates = [proc.intensity]
        elif isinstance(proc, Matern2):
            rates = [proc.proposal_intensity]
            if proc.hardcore < 0:
                raise ValueError("hard-core distance must be non-negative")
        elif isinstance(proc, Thomas):
            rates = [proc.parent_intensity, proc.mean_offspring, proc.sigma]
        else:
            raise TypeError(f"unknown process {proc!r}")
        if any(not v > 0 for v in rates):
            raise ValueError("process rates must be positive")
        if self.crown_coef <= 0 or self.height_sd < 0:
            raise ValueError("crown_coef must be positive and height_sd non-negative")

    def expected_count(self) -> float:
        proc, area = self.process, self.window.area
        if isinstance(proc, Poisson):
            return proc.intensity * area
        if isinstance(proc, Matern2):
            a = np.pi * proc.hardcore**2
            lam = proc.proposal_intensity if a == 0 else -np.expm1(-proc.proposal_intensity * a) / a
            return lam * area
        return proc.parent_intensity * proc.mean_offspring * area


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _uniform_in(window: Window, n: int, rng, pad: float = 0.0) -> np.ndarray:
    xmin, xmax, ymin, ymax = window.bbox
    xmin, ymin, xmax, ymax = xmin - pad, ymin - pad, xmax + pad, ymax + pad
    if window.kind == "disc" and pad == 0:
        r = window.radius * np.sqrt(rng.uniform(size=n))
        th = rng.uniform(0, 2 * np.pi, size=n)
        return np.column_stack([window.center[0] + r * np.cos(th), window.center[1] + r * np.sin(th)])
    return np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)])


def _area_padded(window: Window, pad: float) -> float:
    xmin, xmax, ymin, ymax = window.bbox
    return (xmax - xmin + 2 * pad) * (ymax - ymin + 2 * pad)


def simulate_pattern(spec: StandSpec, seed=None) -> PointPattern:
    """One realization of the stand's point process in its window.

    Matern II and Thomas are simulated on a window enlarged by the
    interaction range and then clipped, so there is no boundary thinning.
    """
    rng = _rng(seed)
    if spec.expected_count() < 2:
        warnings.warn("expected point count below 2", RuntimeWarning, stacklevel=2)
    proc, win = spec.process, spec.window
    if isinstance(proc, Poisson):
        n = rng.poisson(proc.intensity * win.area)
        pts = _uniform_in(win, n, rng)
    elif isinstance(proc, Matern2):
        pad = proc.hardcore
        n = rng.poisson(proc.proposal_intensity * _area_padded(win, pad))
        cand = _uniform_in(win, n, rng, pad=pad)
        age = rng.uniform(size=n)
        keep = np.ones(n, dtype=bool)
        if n and pad > 0:
            for i, j in cKDTree(cand).query_pairs(proc.hardcore, output_type="ndarray"):
                # the older proposal (larger mark) is deleted
                if age[i] > age[j]:
                    keep[i] = False
                else:
                    keep[j] = False
        pts = cand[keep]
        pts = pts[win.contains(pts)]
    else:
        pad = 4 * proc.sigma
        k = rng.poisson(proc.parent_intensity * _area_padded(win, pad))
        parents = _uniform_in(win, k, rng, pad=pad)
        counts = rng.poisson(proc.mean_offspring, size=k)
        pts = np.repeat(parents, counts, axis=0) + rng.normal(0, proc.sigma, (counts.sum(), 2))
        pts = pts[win.contains(pts)] if len(pts) else pts.reshape(0, 2)
    return PointPattern(pts, win)


def simulate_heights(n: int, spec: StandSpec, seed=None) -> np.ndarray:
    """Truncated-normal tree heights (m)."""
    rng = _rng(seed)
    if spec.height_sd == 0:
        return np.full(n, max(spec.height_mean, spec.height_min))
    a = (spec.height_min - spec.height_mean) / spec.height_sd
    return stats.truncnorm.rvs(a, np.inf, loc=spec.height_mean, scale=spec.height_sd, size=n, random_state=rng)


def simulate_dbh(heights, seed=None, noise_sd: float = 0.15) -> np.ndarray:
    """Breast-height diameters (cm) from heights with log-normal scatter."""
    rng = _rng(seed)
    h = np.asarray(heights, dtype=float)
    base = 1.2 * (h - 1.3) ** 1.1 + 3.0
    return base * np.exp(rng.normal(0.0, noise_sd, size=h.shape))


def crown_surface(xy, trees, heights, crown_coef: float = 0.15) -> np.ndarray:
    """Upper envelope of cone crowns at the query locations.

    Each crown is a cone with apex at the tree height and base radius
    ``crown_coef * height`` at 1.3 m. Outside all crowns the surface is 0.
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    out = np.zeros(xy.shape[0])
    trees = np.atleast_2d(np.asarray(trees, dtype=float)).reshape(-1, 2)
    for (tx, ty), h in zip(trees, np.asarray(heights, dtype=float)):
        base = crown_coef * h
        d = np.hypot(xy[:, 0] - tx, xy[:, 1] - ty)
        inside = d <= base
        z = h - (h - 1.3) * d[inside] / base
        out[inside] = np.maximum(out[inside], z)
    return out


def simulate_cloud(
    trees,
    heights,
    spec: StandSpec,
    pulse_density: float = 0.89,
    seed=None,
    center=(0.0, 0.0),
    outer_radius: float = 12.0,
    inner_radius: float = 9.0,
    noise_sd: float = 0.1,
    ground_fraction: float = 0.5,
    plot_id: str = "",
) -> PlotCloud:
    """Laser returns over cone crowns within the outer plot circle.

    Pulses are Poisson-scattered. Each pulse gives a first return on the
    crown surface (plus Gaussian noise, floored at 0) and a last return
    that reaches the ground with probability `ground_fraction` and
    otherwise hits the crown at a uniform depth below the first return.
    """
    if pulse_density <= 0:
        raise ValueError("pulse density must be positive")
    rng = _rng(seed)
    disc = Window.disc(center, outer_radius)
    n = rng.poisson(pulse_density * disc.area)
    xy = _uniform_in(disc, n, rng)
    surface = crown_surface(xy, trees, heights, spec.crown_coef)
    first = np.maximum(surface + rng.normal(0, noise_sd, n), 0.0)
    first[surface == 0] = 0.0
    to_ground = rng.uniform(size=n) < ground_fraction
    last = np.where(to_ground, 0.0, first * rng.uniform(size=n))
    intensity = rng.uniform(10, 100, size=2 * n)
    return PlotCloud(
        x=np.concatenate([xy[:, 0], xy[:, 0]]),
        y=np.concatenate([xy[:, 1], xy[:, 1]]),
        height=np.concatenate([first, last]),
        intensity=intensity,
        return_index=np.concatenate([np.full(n, FIRST), np.full(n, LAST)]),
        plot_id=plot_id,
        center=center,
        outer_radius=outer_radius,
        inner_radius=inner_radius,
    )


def development_class(heights) -> int:
    """Coarse development class (3-6) from the mean tree height."""
    m = float(np.mean(heights)) if len(heights) else 0.0
    if m < 10:
        return 3
    if m < 14:
        return 4
    if m < 18:
        return 5
    return 6


@dataclass
class SyntheticPlot:
    """A simulated field plot: stand on the outer disc, field data on the inner one."""

    plot_id: str
    stand: np.ndarray
    heights: np.ndarray
    dbh: np.ndarray
    field: PointPattern
    field_dbh: np.ndarray
    cloud: PlotCloud
    dev_class: int


def simulate_plot(
    spec: StandSpec,
    seed=None,
    plot_id: str = "",
    pulse_density: float = 0.89,
    outer_radius: float = 12.0,
    **cloud_kw,
) -> SyntheticPlot:
    """Simulate a stand over the outer circle and observe a field plot in `spec.window`.

    The window of `spec` must be a disc; trees are simulated on the
    concentric disc of radius `outer_radius` so crowns near the plot edge
    have neighbours.
    """
    if spec.window.kind != "disc":
        raise ValueError("simulate_plot needs a disc window")
    rng = _rng(seed)
    inner = spec.window
    outer = Window.disc(inner.center, outer_radius)
    big = StandSpec(spec.process, outer, spec.height_mean, spec.height_sd, spec.height_min, spec.crown_coef)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        stand = simulate_pattern(big, rng)
    heights = simulate_heights(stand.n, spec, rng)
    dbh = simulate_dbh(heights, rng)
    infield = inner.contains(stand.points) if stand.n else np.zeros(0, dtype=bool)
    field_pp = PointPattern(stand.points[infield], inner)
    cloud = simulate_cloud(
        stand.points, heights, spec, pulse_density, rng,
        center=inner.center, outer_radius=outer_radius, inner_radius=inner.radius,
        plot_id=plot_id, **cloud_kw,
    )
    return SyntheticPlot(
        plot_id, stand.points, heights, dbh, field_pp, dbh[infield], cloud,
        development_class(heights[infield]),
    )


STRUCTURES = ("regular", "random", "clustered")


def random_stand(structure: str, seed=None, center=(0.0, 0.0), radius: float = 9.0) -> StandSpec:
    """Draw a stand of the given structure with random density and heights.

    Height parameters are drawn independently of the structure so that the
    vertical profile carries no information about the spatial pattern.
    Expected densities are roughly 0.06-0.16 trees per square metre.
    """
    rng = _rng(seed)
    if structure == "regular":
        h = rng.uniform(1.4, 2.2)
        proc = Matern2(1.0, h)
    elif structure == "random":
        proc = Poisson(rng.uniform(0.06, 0.16))
    elif structure == "clustered":
        kappa = rng.uniform(0.01, 0.03)
        proc = Thomas(kappa, rng.uniform(0.06, 0.16) / kappa, rng.uniform(0.5, 1.2))
    else:
        raise ValueError(f"unknown structure {structure!r}")
    return StandSpec(
        proc,
        Window.disc(center, radius),
        height_mean=rng.uniform(10.0, 20.0),
        height_sd=rng.uniform(2.0, 4.0),
    )


def simulate_survey(n_plots: int, seed=None, spacing: float = 100.0, pulse_density: float = 0.89) -> list[SyntheticPlot]:
    """Plots cycling through regular, random and clustered stands.

    Plot ``i`` is centred at ``(i * spacing, 0)`` and named ``P0001``, ...
    """
    rng = _rng(seed)
    plots = []
    for i in range(n_plots):
        spec = random_stand(STRUCTURES[i % 3], rng, center=(i * spacing, 0.0))
        plots.append(simulate_plot(spec, rng, plot_id=f"P{i + 1:04d}", pulse_density=pulse_density))
    return plots
