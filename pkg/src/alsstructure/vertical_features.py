"""Vertical point-cloud summaries (features 1-62)."""

from __future__ import annotations

import numpy as np
from scipy import stats

from .chm import FIRST, GROUND_CUT, LAST, PlotCloud

__all__ = ["PERCENTILES", "FOLIAGE_BOUNDS", "VERTICAL_NAMES", "compute_vertical", "InsufficientReturnsError"]

PERCENTILES = (5, 10, 20, 30, 40, 50, 60, 70, 80, 90, 95)
# upper edges (percent of the return-class height range) of the cumulative foliage bins
FOLIAGE_BOUNDS = PERCENTILES


class InsufficientReturnsError(ValueError):
    pass


def _class_names(tag: str) -> list[str]:
    return [f"{s}_{tag}" for s in ("min", "max", "mean", "sd", "skew", "kurt", "range")]


VERTICAL_NAMES = (
    ["canopy_height"]
    + _class_names("first")
    + _class_names("last")
    + ["canopy_return_prop"]
    + [f"p{p}_first" for p in PERCENTILES]
    + [f"p{p}_last" for p in PERCENTILES]
    + [f"foliage{b}_first" for b in FOLIAGE_BOUNDS]
    + [f"foliage{b}_last" for b in FOLIAGE_BOUNDS]
    + ["intensity_first", "intensity_last"]
)


def _moments(h: np.ndarray) -> list[float]:
    lo, hi = h.min(), h.max()
    sd = h.std(ddof=1)
    if sd == 0 or h.size < 4:
        skew = kurt = np.nan
    else:
        skew = stats.skew(h, bias=False)
        kurt = stats.kurtosis(h, fisher=True, bias=False)
    return [lo, hi, h.mean(), sd, skew, kurt, hi - lo]


def _foliage(h: np.ndarray) -> np.ndarray:
    lo, hi = h.min(), h.max()
    edges = lo + np.asarray(FOLIAGE_BOUNDS) / 100.0 * (hi - lo)
    return np.searchsorted(np.sort(h), edges, side="left") / h.size


def compute_vertical(cloud: PlotCloud) -> np.ndarray:
    """The 62 vertical features of returns inside the inner radius.

    Slot order follows :data:`VERTICAL_NAMES`. Standard deviation is the
    sample one; skewness is the adjusted Fisher-Pearson coefficient and
    kurtosis the bias-corrected excess kurtosis, both NaN for constant
    samples. Foliage slots hold the fraction of returns strictly below
    each relative-height boundary of the class's height range.

    Raises
    ------
    InsufficientReturnsError
        Fewer than two first or two last returns inside the inner radius.
    """
    inner = cloud.inner()
    h, ri, inten = cloud.height[inner], cloud.return_index[inner], cloud.intensity[inner]
    first, last = h[ri == FIRST], h[ri == LAST]
    short = [name for name, arr in (("first", first), ("last", last)) if arr.size < 2]
    if short:
        raise InsufficientReturnsError(f"fewer than 2 {' and '.join(short)} returns in plot {cloud.plot_id!r}")
    out = [h.max()]
    out += _moments(first)
    out += _moments(last)
    out.append(np.mean(h >= GROUND_CUT))
    out += list(np.percentile(first, PERCENTILES))
    out += list(np.percentile(last, PERCENTILES))
    out += list(_foliage(first))
    out += list(_foliage(last))
    out += [inten[ri == FIRST].mean(), inten[ri == LAST].mean()]
    return np.asarray(out, dtype=float)
