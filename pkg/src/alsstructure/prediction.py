"""
Distance-weighted k-nearest-neighbour prediction and accuracy metrics.

Features are standardized with training statistics; the distance between
plots is ``sqrt(sum_l w_l^2 (f_la - f_lb)^2)`` over the selected features,
and neighbours are weighted by ``d^-g`` normalized to sum to one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "Standardizer",
    "KnnModel",
    "ErrorMatrix",
    "knn_distance",
    "neighbors",
    "inverse_distance_weights",
    "knn_predict_continuous",
    "knn_predict_categorical",
    "loo_predict",
    "predict_new",
    "rmse",
    "bias",
    "error_matrix",
    "overall_accuracy",
    "cohen_kappa",
    "evaluate",
]


@dataclass
class Standardizer:
    """Column-wise centring and scaling fitted on training rows.

    Missing values (NaN) are ignored when fitting and imputed with the
    training mean, i.e. 0 after standardization. Columns with zero spread
    are flagged in `degenerate` and map to 0.
    """

    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean = np.nanmean(X, axis=0)
            sd = np.nanstd(X, axis=0)
        mean = np.where(np.isfinite(mean), mean, 0.0)
        sd = np.where(np.isfinite(sd), sd, 0.0)
        return cls(mean, sd)

    @property
    def degenerate(self) -> np.ndarray:
        return ~(self.sd > 0)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.degenerate, 1.0, self.sd)
        Z = (X - self.mean) / safe
        Z[:, self.degenerate] = 0.0
        Z[np.isnan(Z)] = 0.0
        return Z


@dataclass
class KnnModel:
    """A fitted k-nn estimator over standardized training rows."""

    features: np.ndarray
    weights: np.ndarray
    k: int
    g: float
    X: np.ndarray
    y: np.ndarray
    kind: str = "continuous"
    ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=int)
        self.weights = np.asarray(self.weights, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y)
        if self.features.size == 0:
            raise ValueError("no features selected")
        if self.features.shape != self.weights.shape or np.any(self.weights <= 0):
            raise ValueError("one positive weight per selected feature is required")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.g < 0:
            raise ValueError("g must be non-negative")
        if self.kind not in ("continuous", "categorical"):
            raise ValueError(f"unknown response kind {self.kind!r}")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y row counts differ")

    def scaled(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        return rows[:, self.features] * self.weights


def knn_distance(a, b, model: KnnModel) -> float:
    a = np.asarray(a, dtype=float)[model.features]
    b = np.asarray(b, dtype=float)[model.features]
    return float(np.sqrt(np.sum(model.weights**2 * (a - b) ** 2)))


def _pairwise(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return cdist(A, B)


def _k_smallest(D: np.ndarray, k: int) -> np.ndarray:
    """Row-wise indices of the k smallest entries, ordered by (value, index).

    Same result as ``np.argsort(D, axis=1, kind="stable")[:, :k]`` without
    a full sort: among equal values at the cut the lowest indices win.
    """
    n, m = D.shape
    if k >= m:
        return np.argsort(D, axis=1, kind="stable")
    kth = np.partition(D, k - 1, axis=1)[:, k - 1 : k]
    less = D < kth
    eq = D == kth
    need = k - less.sum(axis=1, keepdims=True)
    sel = less | eq
    crowded = np.flatnonzero(eq.sum(axis=1) > need[:, 0])
    if crowded.size:
        sub = eq[crowded]
        sel[crowded] = less[crowded] | (sub & (np.cumsum(sub, axis=1) <= need[crowded]))
    idx = np.nonzero(sel)[1].reshape(n, k)
    order = np.argsort(np.take_along_axis(D, idx, axis=1), axis=1, kind="stable")
    return np.take_along_axis(idx, order, axis=1)


def neighbors(query, model: KnnModel, exclude: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the k nearest training rows.

    Ties are broken by training-row order. `exclude` removes one training
    row (the query itself in leave-one-out mode).
    """
    d = np.sqrt(((model.X[:, model.features] - np.asarray(query, dtype=float)[model.features]) ** 2 * model.weights**2).sum(1))
    if exclude is not None:
        d[exclude] = np.inf
    avail = np.isfinite(d).sum()
    if avail == 0:
        raise ValueError("empty neighbour set")
    k = min(model.k, int(avail))
    idx = np.argsort(d, kind="stable")[:k]
    return idx, d[idx]


def inverse_distance_weights(dist, g: float) -> np.ndarray:
    """Normalized ``d^-g`` weights along the last axis.

    If a row has zero distances and g > 0, those neighbours share the
    weight equally.
    """
    dist = np.asarray(dist, dtype=float)
    if g == 0:
        return np.full(dist.shape, 1.0 / dist.shape[-1])
    zero = dist == 0
    with np.errstate(divide="ignore"):
        raw = np.where(zero, 0.0, dist ** (-g))
    has_zero = zero.any(axis=-1, keepdims=True)
    raw = np.where(has_zero, zero.astype(float), raw)
    return raw / raw.sum(axis=-1, keepdims=True)


def _vote(labels: np.ndarray, w: np.ndarray):
    classes = np.unique(labels)
    totals = np.array([w[labels == c].sum() for c in classes])
    # np.unique sorts, so argmax picks the smallest class code on ties
    best = np.flatnonzero(np.isclose(totals, totals.max(), rtol=0, atol=1e-12))[0]
    return classes[best]


def knn_predict_continuous(query, model: KnnModel, exclude: int | None = None) -> float:
    idx, d = neighbors(query, model, exclude)
    w = inverse_distance_weights(d, model.g)
    return float(np.dot(w, model.y[idx].astype(float)))


def knn_predict_categorical(query, model: KnnModel, exclude: int | None = None):
    idx, d = neighbors(query, model, exclude)
    return _vote(model.y[idx], inverse_distance_weights(d, model.g))


def loo_predict(model: KnnModel, return_neighbors: bool = False):
    """Leave-one-out predictions for every training row.

    Vectorized; row i never appears among its own neighbours.
    """
    n = model.X.shape[0]
    if n < 2:
        raise ValueError("leave-one-out needs at least 2 rows")
    S = model.scaled(model.X)
    D = _pairwise(S, S)
    np.fill_diagonal(D, np.inf)
    k = min(model.k, n - 1)
    idx = _k_smallest(D, k)
    assert not np.any(idx == np.arange(n)[:, None]), "plot selected as its own neighbour"
    d = np.take_along_axis(D, idx, axis=1)
    w = inverse_distance_weights(d, model.g)
    if model.kind == "continuous":
        pred = (w * model.y.astype(float)[idx]).sum(axis=1)
    else:
        pred = np.array([_vote(model.y[i], wi) for i, wi in zip(idx, w)])
    if return_neighbors:
        return pred, idx, w
    return pred


def predict_new(model: KnnModel, Xq) -> np.ndarray:
    """Predict standardized query rows using training rows only as neighbours."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    D = _pairwise(model.scaled(Xq), model.scaled(model.X))
    k = min(model.k, model.X.shape[0])
    idx = _k_smallest(D, k)
    w = inverse_distance_weights(np.take_along_axis(D, idx, axis=1), model.g)
    if model.kind == "continuous":
        return (w * model.y.astype(float)[idx]).sum(axis=1)
    return np.array([_vote(model.y[i], wi) for i, wi in zip(idx, w)])


def rmse(pred, obs) -> float:
    pred, obs = np.asarray(pred, dtype=float), np.asarray(obs, dtype=float)
    return float(np.sqrt(np.mean((pred - obs) ** 2)))


def bias(pred, obs) -> float:
    pred, obs = np.asarray(pred, dtype=float), np.asarray(obs, dtype=float)
    return float(np.mean(pred - obs))


@dataclass(frozen=True)
class ErrorMatrix:
    """Counts with observed classes in rows and predicted classes in columns."""

    labels: tuple
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] != len(self.labels):
            raise ValueError("error matrix must be square and match its labels")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("error matrix counts must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def with_margins(self) -> np.ndarray:
        c = self.counts
        out = np.zeros((c.shape[0] + 1, c.shape[1] + 1), dtype=np.int64)
        out[:-1, :-1] = c
        out[:-1, -1] = c.sum(1)
        out[-1, :-1] = c.sum(0)
        out[-1, -1] = c.sum()
        return out


def error_matrix(pred, obs, labels=None) -> ErrorMatrix:
    pred, obs = np.asarray(pred), np.asarray(obs)
    if pred.shape != obs.shape:
        raise ValueError("predictions and observations differ in length")
    if labels is None:
        labels = sorted(set(obs.tolist()) | set(pred.tolist()), key=str)
    pos = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for o, p in zip(obs.tolist(), pred.tolist()):
        counts[pos[o], pos[p]] += 1
    return ErrorMatrix(tuple(labels), counts)


def overall_accuracy(m: ErrorMatrix) -> float:
    return float(np.trace(m.counts) / m.total)


def cohen_kappa(m: ErrorMatrix) -> float:
    """Cohen's kappa; NaN (with a warning) when chance agreement is 1."""
    n = m.total
    oa = np.trace(m.counts) / n
    pe = float(m.counts.sum(1) @ m.counts.sum(0)) / n**2
    if np.isclose(pe, 1.0, rtol=0, atol=1e-15):
        warnings.warn("kappa undefined: chance agreement is 1", RuntimeWarning, stacklevel=2)
        return float("nan")
    return float((oa - pe) / (1 - pe))


def evaluate(pred, obs, kind: str = "continuous", labels=None) -> dict:
    """RMSE and bias (continuous) or OA, kappa and the error matrix (categorical)."""
    pred, obs = np.asarray(pred), np.asarray(obs)
    if pred.shape != obs.shape:
        raise ValueError("predictions and observations differ in length")
    if pred.size == 0:
        raise ValueError("nothing to evaluate")
    if kind == "continuous":
        return {"rmse": rmse(pred, obs), "bias": bias(pred, obs), "n": int(pred.size)}
    if kind == "categorical":
        m = error_matrix(pred, obs, labels)
        return {"oa": overall_accuracy(m), "kappa": cohen_kappa(m), "n": m.total, "matrix": m}
    raise ValueError(f"unknown kind {kind!r}")
