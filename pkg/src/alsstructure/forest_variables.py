"""
Field-plot response variables.

Aggregation index, FD, two-parameter Weibull fit of the dbh distribution,
and the cut-off classification into regular / random / clustered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .point_pattern import PointPattern, Window, aggregation_index, fd_summary

__all__ = [
    "MIN_DBH",
    "MIN_TREES",
    "R_CUTS",
    "FD_CUT",
    "FD_CUT_REFERENCE",
    "WeibullFitError",
    "PlotVariables",
    "weibull_fit",
    "classify_r",
    "classify_fd",
    "structure_classify",
    "plot_variables",
]

MIN_DBH = 4.5
MIN_TREES = 10
R_CUTS = (0.85, 1.15)
# FD cut-off on the reference scale, about 100 times the FD computed here
FD_CUT_REFERENCE = 15.0
# FD cut-off for FD computed here as an integral over metres
FD_CUT = 0.15
SHAPE_CAP = 100.0

REGULAR, RANDOM, CLUSTERED = "regular", "random", "clustered"


class WeibullFitError(ValueError):
    pass


def _shape_score(k: float, z: np.ndarray, logz: np.ndarray) -> float:
    # profile score of the shape (scale maximized out), divided by n
    zk = z**k
    return 1.0 / k + logz.mean() - (zk * logz).sum() / zk.sum()


def weibull_fit(dbh, tol: float = 1e-8) -> tuple[float, float]:
    """Maximum-likelihood (scale, shape) of a two-parameter Weibull.

    The shape solves the profile score equation
    ``1/k + mean(log x) - sum(x^k log x) / sum(x^k) = 0`` by bracketing;
    the scale is then ``mean(x^k)^(1/k)``. Data are divided by their
    geometric mean first, which makes the fit exactly scale-equivariant.

    Raises
    ------
    WeibullFitError
        Fewer than 10 values, non-positive values, or no root below the
        shape cap (e.g. all values equal).
    """
    x = np.asarray(dbh, dtype=float)
    if x.size < MIN_TREES:
        raise WeibullFitError(f"need at least {MIN_TREES} observations, got {x.size}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise WeibullFitError("observations must be positive and finite")
    logx = np.log(x)
    g = logx.mean()
    logz = logx - g
    z = np.exp(logz)
    lo, hi = 1e-3, SHAPE_CAP
    # the score is decreasing in k; positive at the cap means the shape diverges
    if _shape_score(hi, z, logz) > 0:
        raise WeibullFitError("shape exceeds cap; data nearly constant")
    k = brentq(_shape_score, lo, hi, args=(z, logz), xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(_shape_score(k, z, logz) * x.size) > tol:
        raise WeibullFitError("shape equation did not converge")
    scale = np.exp(g) * np.mean(z**k) ** (1.0 / k)
    return float(scale), float(k)


def classify_r(r_index: float, cuts=R_CUTS) -> str:
    lo, hi = cuts
    if r_index < lo:
        return CLUSTERED
    if r_index > hi:
        return REGULAR
    return RANDOM


def classify_fd(fd: float, cut: float = FD_CUT) -> str:
    if fd < -cut:
        return CLUSTERED
    if fd > cut:
        return REGULAR
    return RANDOM


def structure_classify(r_index: float, fd: float, r_cuts=R_CUTS, fd_cut: float = FD_CUT_REFERENCE) -> tuple[str, str]:
    """(R-rule class, FD-rule class); values on a cut-off are random.

    The default FD cut-off is on the reference FD scale. For FD values
    produced by :func:`plot_variables` pass ``fd_cut=FD_CUT``.
    """
    if not (np.isfinite(r_index) and np.isfinite(fd)):
        raise ValueError("structure classification needs finite inputs")
    return classify_r(r_index, r_cuts), classify_fd(fd, fd_cut)


@dataclass(frozen=True)
class PlotVariables:
    plot_id: str
    n_trees: int
    r_index: float
    fd: float
    weibull_scale: float
    weibull_shape: float
    dev_class: str
    r_class: str
    fd_class: str


def plot_variables(
    trees,
    window: Window,
    dbh=None,
    plot_id: str = "",
    dev_class="NA",
    r_t: float = 4.5,
    grid_step: float = 0.1,
    fd_cut: float = FD_CUT,
) -> PlotVariables:
    """Response variables of one field plot.

    Parameters
    ----------
    trees : PointPattern or array_like
        Tree locations; a PointPattern's own window is used when given.
    window : Window
        Plot window (ignored for a PointPattern).
    dbh : array_like
        Diameters (cm) aligned with the trees. Trees with dbh <= 4.5 cm
        are dropped before anything is computed.
    dev_class
        Development class, passed through unchanged.
    """
    if isinstance(trees, PointPattern):
        window = trees.window
        xy = trees.points
    else:
        xy = np.asarray(trees, dtype=float).reshape(-1, 2)
    dbh = np.asarray(dbh, dtype=float)
    if dbh.shape[0] != xy.shape[0]:
        raise ValueError("dbh must align with tree locations")
    keep = dbh > MIN_DBH
    xy, dbh = xy[keep], dbh[keep]
    if xy.shape[0] < MIN_TREES:
        raise ValueError(f"plot {plot_id!r} has {xy.shape[0]} trees with dbh > {MIN_DBH} cm; need {MIN_TREES}")
    pattern = PointPattern(xy, window)
    r_index = aggregation_index(pattern)
    fd = fd_summary(pattern, r_t, grid_step)
    scale, shape = weibull_fit(dbh)
    return PlotVariables(
        plot_id=str(plot_id),
        n_trees=pattern.n,
        r_index=r_index,
        fd=fd,
        weibull_scale=scale,
        weibull_shape=shape,
        dev_class=str(dev_class),
        r_class=classify_r(r_index),
        fd_class=classify_fd(fd, fd_cut),
    )
