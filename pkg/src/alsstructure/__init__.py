"""
Forest structure from airborne laser scanning.

Vertical and spatial (multi-level thresholded canopy height model) plot
features, field-plot structure variables, and k-nn prediction with
genetic-algorithm feature weighting.
"""

from .chm import Chm, PlotCloud, ThresholdedChm, build_chm, threshold_chm
from .features import FEATURE_NAMES, N_FEATURES, plot_features
from .forest_variables import PlotVariables, plot_variables, structure_classify, weibull_fit
from .ga_selector import Chromosome, GaConfig, fitness, run_ga
from .point_pattern import PointPattern, Window, aggregation_index, d_integrated, d_kl, f_function_km, fd_summary
from .prediction import KnnModel, Standardizer, evaluate, loo_predict, predict_new
from .raster_spatial import layer_features
from .synthetic_forest import Matern2, Poisson, StandSpec, Thomas, simulate_pattern, simulate_plot, simulate_survey

__version__ = "0.1.0"

__all__ = [
    "Chm",
    "PlotCloud",
    "ThresholdedChm",
    "build_chm",
    "threshold_chm",
    "FEATURE_NAMES",
    "N_FEATURES",
    "plot_features",
    "PlotVariables",
    "plot_variables",
    "structure_classify",
    "weibull_fit",
    "Chromosome",
    "GaConfig",
    "fitness",
    "run_ga",
    "PointPattern",
    "Window",
    "aggregation_index",
    "d_integrated",
    "d_kl",
    "f_function_km",
    "fd_summary",
    "KnnModel",
    "Standardizer",
    "evaluate",
    "loo_predict",
    "predict_new",
    "layer_features",
    "Poisson",
    "Matern2",
    "Thomas",
    "StandSpec",
    "simulate_pattern",
    "simulate_plot",
    "simulate_survey",
]
