"""
Spatial features of thresholded canopy height models.

Patch and gap labeling, patch-size statistics, the 4-neighbourhood
same-type count, the Euler number (patches minus gaps), the raster
empty-space function with its Boolean-model reference, and the 36 layer
features assembled from four height levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import pdist

from .chm import Chm, ThresholdedChm, threshold_chm
from .point_pattern import CurveOnGrid, DivergenceError, d_integrated, d_kl, distance_grid

__all__ = [
    "LEVELS",
    "LAYER_PAIRS",
    "LabeledComponents",
    "BooleanModelParams",
    "LayerFeatureSet",
    "DegenerateLayerError",
    "connected_components",
    "patch_stats",
    "mean_same_neighbors",
    "euler_number",
    "gap_distances",
    "raster_f_function",
    "boolean_f_theo",
    "estimate_boolean_params",
    "layer_features",
]

LEVELS = (0.8, 0.6, 0.4, 0.2)
# (higher level, lower level) pairs behind features 91-98
LAYER_PAIRS = ((0.8, 0.6), (0.6, 0.4), (0.4, 0.2), (0.8, 0.4))

_STRUCTURE = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


class DegenerateLayerError(ValueError):
    """Raised when a thresholded layer lacks one of the two phases."""


@dataclass(frozen=True)
class LabeledComponents:
    labels: np.ndarray
    count: int
    sizes: np.ndarray
    diameters: np.ndarray


@dataclass(frozen=True)
class BooleanModelParams:
    """Area fraction and radius moments of a Boolean disc model.

    ``fallback_lambda`` is used when every radius is zero, in which case the
    reference reduces to the Poisson form ``1 - exp(-lambda pi r^2)``.
    """

    area_fraction: float
    mean_radius: float
    mean_radius_sq: float
    fallback_lambda: float = 0.0

    @property
    def implied_lambda(self) -> float:
        p = self.area_fraction
        if p == 0:
            return 0.0
        if self.mean_radius_sq <= 0:
            return self.fallback_lambda
        return -np.log1p(-p) / (np.pi * self.mean_radius_sq)


@dataclass
class LayerFeatureSet:
    """The 36 spatial slots (features 63-98), NaN where degenerate."""

    values: np.ndarray
    levels: tuple = LEVELS
    pairs: tuple = LAYER_PAIRS

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (36,):
            raise ValueError("a layer feature set has exactly 36 slots")
        if any(hi <= lo for hi, lo in self.pairs):
            raise ValueError("layer pairs must list the higher level first")


def _phase_pixels(t: ThresholdedChm, phase: str) -> np.ndarray:
    if phase == "canopy":
        return t.canopy
    if phase == "gap":
        return t.gap
    raise ValueError(f"phase must be 'canopy' or 'gap', got {phase!r}")


def _component_diameters(labels: np.ndarray, count: int, pixel_size: float) -> np.ndarray:
    # The farthest pair of pixel centres lies on the component's boundary.
    diam = np.zeros(count)
    if count == 0:
        return diam
    same_as_neighbors = np.ones(labels.shape, dtype=bool)
    padded = np.pad(labels, 1)
    ny, nx = labels.shape
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        same_as_neighbors &= padded[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx] == labels
    boundary = (labels > 0) & ~same_as_neighbors
    rows, cols = np.nonzero(boundary)
    lab = labels[rows, cols]
    order = np.argsort(lab, kind="stable")
    rows, cols, lab = rows[order], cols[order], lab[order]
    splits = np.searchsorted(lab, np.arange(1, count + 2))
    for i in range(count):
        a, b = splits[i], splits[i + 1]
        if b - a > 1:
            pts = np.column_stack([rows[a:b], cols[a:b]]).astype(float)
            diam[i] = pdist(pts).max() * pixel_size
    return diam


def connected_components(t: ThresholdedChm, phase: str = "canopy", connectivity: int = 4) -> LabeledComponents:
    """Label the connected regions of one phase inside the mask."""
    if t.bits.size == 0:
        raise ValueError("empty raster")
    if connectivity not in _STRUCTURE:
        raise ValueError("connectivity must be 4 or 8")
    labels, count = ndimage.label(_phase_pixels(t, phase), structure=_STRUCTURE[connectivity])
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    diam = _component_diameters(labels, count, t.pixel_size)
    return LabeledComponents(labels, int(count), sizes, diam)


def patch_stats(c: LabeledComponents) -> tuple[int, float, float]:
    """Count, mean size and population standard deviation of size (pixels)."""
    if c.count == 0:
        return 0, 0.0, 0.0
    sizes = c.sizes.astype(float)
    return c.count, float(sizes.mean()), float(sizes.std())


def mean_same_neighbors(t: ThresholdedChm) -> float:
    """Average number of 4-neighbours sharing the focal pixel's type.

    Only pixels inside the mask are focal pixels or neighbours.
    """
    mask = t.mask
    if not mask.any():
        raise ValueError("raster has no pixels inside the mask")
    bits = t.bits.astype(bool)
    total = np.zeros(bits.shape, dtype=int)
    ny, nx = bits.shape
    pb = np.pad(bits, 1)
    pm = np.pad(mask, 1)
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        nb = pb[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
        nm = pm[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
        total += nm & (nb == bits)
    return float(total[mask].mean())


def euler_number(t: ThresholdedChm, connectivity: int = 4) -> int:
    """Number of canopy patches minus number of gaps."""
    canopy = connected_components(t, "canopy", connectivity).count
    gaps = connected_components(t, "gap", connectivity).count
    return canopy - gaps


def gap_distances(t: ThresholdedChm) -> np.ndarray:
    """Euclidean distance from every gap pixel centre to the nearest canopy pixel centre."""
    canopy, gap = t.canopy, t.gap
    if not canopy.any() or not gap.any():
        raise DegenerateLayerError("layer needs both canopy and gap pixels")
    dist = ndimage.distance_transform_edt(~canopy, sampling=t.pixel_size)
    return dist[gap]


def raster_f_function(t: ThresholdedChm, r_t: float = 4.5) -> CurveOnGrid:
    """Empirical CDF of gap-to-canopy distances on the grid 0, pixel, ..., r_t."""
    d = np.sort(gap_distances(t))
    r = distance_grid(r_t, t.pixel_size)
    f = np.searchsorted(d, r + 1e-9 * t.pixel_size, side="right") / d.size
    return CurveOnGrid(r, f, {"n_gap": int(d.size)})


def boolean_f_theo(params: BooleanModelParams, r_grid) -> CurveOnGrid:
    """Empty-space function of a Boolean disc model.

    ``1 - exp(-lambda pi r (2 E[R] + r))`` with lambda implied by the area
    fraction: ``-log(1 - p) / (pi E[R^2])``.
    """
    p = params.area_fraction
    if not 0 <= p < 1:
        raise ValueError(f"area fraction must be in [0, 1), got {p}")
    r = np.asarray(r_grid, dtype=float)
    lam = params.implied_lambda
    mean_r = params.mean_radius if params.mean_radius_sq > 0 else 0.0
    return CurveOnGrid(r, -np.expm1(-lam * np.pi * r * (2 * mean_r + r)))


def estimate_boolean_params(
    c: LabeledComponents, t: ThresholdedChm, radius: str = "half_diameter"
) -> BooleanModelParams:
    """Boolean-model parameters from the canopy patches of a layer.

    Parameters
    ----------
    c : LabeledComponents
        Canopy components of `t`.
    t : ThresholdedChm
    radius : {'half_diameter', 'diameter'}
        How a patch's largest pixel-to-pixel distance maps to its radius.
    """
    if c.count == 0:
        raise DegenerateLayerError("no canopy patches")
    if radius == "half_diameter":
        radii = c.diameters / 2
    elif radius == "diameter":
        radii = c.diameters.copy()
    else:
        raise ValueError(f"unknown radius rule {radius!r}")
    masked_area = t.mask.sum() * t.pixel_size**2
    p = t.canopy.sum() / t.mask.sum()
    return BooleanModelParams(
        area_fraction=float(p),
        mean_radius=float(radii.mean()),
        mean_radius_sq=float((radii**2).mean()),
        fallback_lambda=c.count / masked_area,
    )


def _divergences(f, f_ref, r_t):
    di = d_integrated(f, f_ref, r_t)
    try:
        dk = d_kl(f, f_ref, r_t)
    except DivergenceError:
        dk = np.nan
    return di, dk


def layer_features(
    chm: Chm,
    r_t: float = 4.5,
    levels=LEVELS,
    pairs=LAYER_PAIRS,
    connectivity: int = 4,
    radius: str = "half_diameter",
) -> LayerFeatureSet:
    """Features 63-98 for the CHM thresholded at each level.

    Slot order: patch counts, mean patch size, sd of patch size, mean
    same-type 4-neighbours, Euler number, D_I and D_KL against the Boolean
    reference (each one slot per level), then D_I and D_KL for each layer
    pair with the higher level as the compared curve. Degenerate layers
    give NaN in the F-based slots.
    """
    levels = tuple(levels)
    nl = len(levels)
    if nl != 4 or len(pairs) != 4:
        raise ValueError("exactly four levels and four layer pairs are required")
    if any(hi <= lo for hi, lo in pairs):
        raise ValueError("layer pairs must list the higher level first")
    out = np.full((9, 4), np.nan)
    curves = {}
    for j, q in enumerate(levels):
        t = threshold_chm(chm, q)
        comp = connected_components(t, "canopy", connectivity)
        n, mean_size, sd_size = patch_stats(comp)
        out[0, j], out[1, j], out[2, j] = n, mean_size, sd_size
        out[3, j] = mean_same_neighbors(t)
        out[4, j] = comp.count - connected_components(t, "gap", connectivity).count
        try:
            f = raster_f_function(t, r_t)
        except DegenerateLayerError:
            continue
        curves[q] = f
        params = estimate_boolean_params(comp, t, radius)
        out[5, j], out[6, j] = _divergences(f, boolean_f_theo(params, f.r), r_t)
    for j, (hi, lo) in enumerate(pairs):
        if hi in curves and lo in curves:
            out[7, j], out[8, j] = _divergences(curves[hi], curves[lo], r_t)
    return LayerFeatureSet(out.ravel(), levels, tuple(pairs))
