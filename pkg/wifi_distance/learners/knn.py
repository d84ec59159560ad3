from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np

from wifi_distance.learners.base import Standardizer, TrainedModel, _floats, check_xy, resolve_mask, stopwatch
from wifi_distance.selection.masks import FeatureMask

WEIGHTINGS = ("uniform", "distance")

# Upper bound on query x train x feature elements materialised per distance block.
_BLOCK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class KnnFit:
    """Brute-force k-nearest-neighbour regressor over standardized training rows.

    Neighbours are ranked by Euclidean distance; among equidistant rows the
    lower training index wins.
    """

    kind = "knn"

    scaler: Standardizer
    X_train: np.ndarray
    y_train: np.ndarray
    k: int
    weighting: str

    def neighbours(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (indices, distances) of the k nearest training rows per query row."""
        Q = self.scaler.transform(X)
        n_train, d = self.X_train.shape
        block = max(1, _BLOCK_ELEMENTS // max(1, n_train * max(1, d)))
        idx_out = np.empty((Q.shape[0], self.k), dtype=np.int64)
        dist_out = np.empty((Q.shape[0], self.k), dtype=float)
        for start in range(0, Q.shape[0], block):
            q = Q[start:start + block]
            diff = q[:, None, :] - self.X_train[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            idx_out[start:start + block] = order
            dist_out[start:start + block] = np.sqrt(np.take_along_axis(d2, order, axis=1))
        return idx_out, dist_out

    def predict(self, X: np.ndarray) -> np.ndarray:
        if X.shape[0] == 0:
            return np.empty(0, dtype=float)
        idx, dist = self.neighbours(X)
        ys = self.y_train[idx]
        if self.weighting == "uniform":
            return ys.mean(axis=1)
        out = np.empty(X.shape[0], dtype=float)
        for i in range(X.shape[0]):
            zero = dist[i] == 0.0
            if zero.any():
                out[i] = ys[i][zero].mean()
            else:
                w = 1.0 / dist[i]
                out[i] = float(np.dot(w, ys[i]) / w.sum())
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scaler": self.scaler.to_dict(),
            "X_train": [_floats(row) for row in self.X_train],
            "y_train": _floats(self.y_train),
            "k": int(self.k),
            "weighting": self.weighting,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "KnnFit":
        y = np.array(d["y_train"], dtype=float)
        X = np.array(d["X_train"], dtype=float).reshape(len(y), -1)
        return cls(
            scaler=Standardizer.from_dict(d["scaler"]),
            X_train=X,
            y_train=y,
            k=int(d["k"]),
            weighting=str(d["weighting"]),
        )


def fit_knn(
    X,
    y,
    k: int = 5,
    weighting: str = "uniform",
    *,
    feature_mask: Optional[FeatureMask] = None,
    train_filter_m: float = math.inf,
) -> TrainedModel:
    Xa, ya = check_xy(X, y)
    k = int(k)
    if not 1 <= k <= Xa.shape[0]:
        raise ValueError(f"k must be in [1, {Xa.shape[0]}], got {k}")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    mask = resolve_mask(feature_mask, Xa.shape[1])
    with stopwatch() as t:
        scaler = Standardizer.fit(Xa)
        fitted = KnnFit(scaler=scaler, X_train=scaler.transform(Xa), y_train=ya.copy(), k=k, weighting=weighting)
    return TrainedModel(
        kind="knn",
        feature_mask=mask,
        hyperparameters={"k": k, "weighting": weighting},
        fitted=fitted,
        train_filter_m=train_filter_m,
        train_time_s=t[0],
    )
