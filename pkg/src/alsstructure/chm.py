"""
Canopy height model rasterization and thresholding.

The CHM is the per-pixel maximum of first-return heights over a square grid
covering the outer plot circle, with empty pixels filled by the median of
their non-empty 8-neighbours. Features are later taken from pixels whose
centres fall inside the inner circle (the mask).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FIRST",
    "LAST",
    "INTERMEDIATE",
    "GROUND_CUT",
    "PlotCloud",
    "Chm",
    "ThresholdedChm",
    "DegenerateCanopyError",
    "build_chm",
    "threshold_chm",
]

FIRST, LAST, INTERMEDIATE = 0, 1, 2
RETURN_CODES = {"first": FIRST, "last": LAST, "intermediate": INTERMEDIATE}

# returns below this height (m) are set to ground level
GROUND_CUT = 1.3


class DegenerateCanopyError(ValueError):
    """Raised when a CHM has no positive height inside the mask."""


@dataclass(frozen=True)
class PlotCloud:
    """Height-normalized pulse returns of one plot.

    Heights below :data:`GROUND_CUT` are set to 0 on construction.

    Parameters
    ----------
    x, y, height, intensity : array_like
        Per-return coordinates (m), height above ground (m) and intensity.
    return_index : array_like
        Return class codes (``FIRST``, ``LAST``, ``INTERMEDIATE``) or the
        strings ``"first"``, ``"last"``, ``"intermediate"``.
    center : tuple of float
        Plot centre.
    outer_radius, inner_radius : float
        CHM build radius and feature radius.
    """

    x: np.ndarray
    y: np.ndarray
    height: np.ndarray
    intensity: np.ndarray
    return_index: np.ndarray
    plot_id: str = ""
    center: tuple[float, float] = (0.0, 0.0)
    outer_radius: float = 12.0
    inner_radius: float = 9.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        h = np.asarray(self.height, dtype=float).copy()
        inten = np.asarray(self.intensity, dtype=float)
        ri = np.asarray(self.return_index)
        if ri.dtype.kind in "US":
            try:
                ri = np.array([RETURN_CODES[str(v).lower()] for v in ri], dtype=int)
            except KeyError as exc:
                raise ValueError(f"unknown return class {exc.args[0]!r}") from None
        ri = ri.astype(int)
        n = x.shape[0]
        if not all(a.shape == (n,) for a in (y, h, inten, ri)):
            raise ValueError("return arrays must be 1-d and of equal length")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite coordinate or height")
        if np.any(inten < 0):
            raise ValueError("intensity must be non-negative")
        if np.any(~np.isin(ri, (FIRST, LAST, INTERMEDIATE))):
            raise ValueError("return_index codes must be 0, 1 or 2")
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("need 0 < inner_radius < outer_radius")
        dist = np.hypot(x - self.center[0], y - self.center[1])
        if np.any(dist > self.outer_radius * (1 + 1e-9)):
            raise ValueError("returns outside the outer radius")
        h[h < GROUND_CUT] = 0.0
        for name, arr in (("x", x), ("y", y), ("height", h), ("intensity", inten), ("return_index", ri)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "center", tuple(map(float, self.center)))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def inner(self) -> np.ndarray:
        """Boolean selector of returns within the inner radius."""
        d = np.hypot(self.x - self.center[0], self.y - self.center[1])
        return d <= self.inner_radius


@dataclass(frozen=True)
class Chm:
    """Canopy height raster.

    Row 0 is the southernmost row; ``origin`` is the lower-left corner.
    """

    grid: np.ndarray
    pixel_size: float
    origin: tuple[float, float]
    mask: np.ndarray

    @property
    def hmax(self) -> float:
        if not self.mask.any():
            return 0.0
        return float(self.grid[self.mask].max())

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.grid.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.pixel_size
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.pixel_size
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class ThresholdedChm:
    """Binary canopy (1) / gap (0) raster at level q of the CHM maximum."""

    bits: np.ndarray
    level_q: float
    pixel_size: float
    mask: np.ndarray

    @property
    def canopy(self) -> np.ndarray:
        return self.bits.astype(bool) & self.mask

    @property
    def gap(self) -> np.ndarray:
        return ~self.bits.astype(bool) & self.mask


def _fill_holes(grid: np.ndarray, region: np.ndarray) -> np.ndarray:
    # Synchronous passes: each pass only reads values from the previous one.
    grid = grid.copy()
    ny, nx = grid.shape
    while True:
        empty = np.isnan(grid) & region
        if not empty.any():
            break
        padded = np.pad(grid, 1, constant_values=np.nan)
        stack = np.stack([
            padded[1 + dy : 1 + dy + ny, 1 + dx : 1 + dx + nx]
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
            if dy or dx
        ])
        fillable = empty & np.any(~np.isnan(stack), axis=0)
        if not fillable.any():
            break
        grid[fillable] = np.nanmedian(stack[:, fillable], axis=0)
    grid[np.isnan(grid)] = 0.0
    return grid


def build_chm(cloud: PlotCloud, pixel_size: float = 0.5) -> Chm:
    """Rasterize first returns into a canopy height model.

    Each pixel holds the highest first return that falls into it. Empty
    pixels inside the outer circle are filled by the median of their
    non-empty 8-neighbours, repeated until nothing changes; leftovers
    become 0. The mask flags pixels whose centres lie within the inner
    radius.
    """
    if cloud.n == 0:
        raise ValueError("cloud has no returns")
    if not 0 < pixel_size <= cloud.inner_radius:
        raise ValueError(f"pixel_size must be in (0, inner_radius], got {pixel_size}")
    cx, cy = cloud.center
    R = cloud.outer_radius
    npix = int(np.ceil(2 * R / pixel_size))
    x0 = cx - npix * pixel_size / 2
    y0 = cy - npix * pixel_size / 2

    first = cloud.return_index == FIRST
    col = np.clip(((cloud.x[first] - x0) / pixel_size).astype(int), 0, npix - 1)
    row = np.clip(((cloud.y[first] - y0) / pixel_size).astype(int), 0, npix - 1)
    flat = np.full(npix * npix, -np.inf)
    np.maximum.at(flat, row * npix + col, cloud.height[first])
    flat[np.isneginf(flat)] = np.nan
    grid = flat.reshape(npix, npix)

    centers = x0 + (np.arange(npix) + 0.5) * pixel_size, y0 + (np.arange(npix) + 0.5) * pixel_size
    gx, gy = np.meshgrid(*centers)
    dist = np.hypot(gx - cx, gy - cy)
    region = dist <= R
    mask = dist <= cloud.inner_radius
    grid = _fill_holes(grid, region | mask)
    grid[~region] = 0.0
    return Chm(grid, float(pixel_size), (x0, y0), mask)


def threshold_chm(chm: Chm, q: float) -> ThresholdedChm:
    """Binarize at ``q * hmax``; heights at or above the threshold are canopy."""
    if not 0 < q < 1:
        raise ValueError(f"q must be in (0, 1), got {q}")
    hmax = chm.hmax
    if not hmax > 0:
        raise DegenerateCanopyError("CHM maximum height is 0 inside the mask")
    bits = ((chm.grid >= q * hmax) & chm.mask).astype(np.uint8)
    return ThresholdedChm(bits, float(q), chm.pixel_size, chm.mask)
