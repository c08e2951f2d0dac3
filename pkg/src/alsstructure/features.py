"""The 98-slot ALS feature vector and its catalog."""

from __future__ import annotations

import numpy as np

from .chm import PlotCloud, build_chm
from .raster_spatial import LAYER_PAIRS, LEVELS, layer_features
from .vertical_features import VERTICAL_NAMES, compute_vertical

__all__ = ["FEATURE_NAMES", "N_FEATURES", "VERTICAL_IDS", "SPATIAL_IDS", "spatial_names", "plot_features"]


def spatial_names(levels=LEVELS, pairs=LAYER_PAIRS) -> list[str]:
    tags = [f"{int(round(q * 100))}" for q in levels]
    names = []
    for stem in ("n_patches", "mean_patch_size", "sd_patch_size", "same_neighbors", "euler", "di_theo", "dkl_theo"):
        names += [f"{stem}_{t}" for t in tags]
    for stem in ("di_pair", "dkl_pair"):
        names += [f"{stem}_{int(round(hi * 100))}_{int(round(lo * 100))}" for hi, lo in pairs]
    return names


FEATURE_NAMES = tuple(VERTICAL_NAMES + spatial_names())
N_FEATURES = len(FEATURE_NAMES)
# 1-based catalog ids
VERTICAL_IDS = tuple(range(1, 63))
SPATIAL_IDS = tuple(range(63, 99))

assert N_FEATURES == 98


def plot_features(cloud: PlotCloud, pixel_size: float = 0.5, r_t: float = 4.5, levels=LEVELS, pairs=LAYER_PAIRS, radius="half_diameter") -> np.ndarray:
    """Vertical and spatial features of one plot, NaN for degenerate slots.

    A plot whose CHM has no canopy inside the inner circle gets NaN in all
    spatial slots.
    """
    vertical = compute_vertical(cloud)
    chm = build_chm(cloud, pixel_size)
    if chm.hmax > 0:
        spatial = layer_features(chm, r_t, levels, pairs, radius=radius).values
    else:
        spatial = np.full(36, np.nan)
    return np.concatenate([vertical, spatial])
