from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np

from wifi_distance.errors import LearnerInputError
from wifi_distance.learners.base import Standardizer, TrainedModel, _floats, check_xy, resolve_mask, stopwatch
from wifi_distance.selection.masks import FeatureMask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearFit:
    """Linear predictor in standardized feature space: y = ((X - mean) / scale) @ weights + intercept."""

    kind = "linear"

    scaler: Standardizer
    weights: np.ndarray
    intercept: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.scaler.transform(X) @ self.weights + self.intercept

    @property
    def coef_(self) -> np.ndarray:
        """Weights mapped back to raw feature units."""
        return self.weights / self.scaler.scale

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - np.dot(self.coef_, self.scaler.mean))

    def to_dict(self) -> Dict[str, Any]:
        return {"scaler": self.scaler.to_dict(), "weights": _floats(self.weights), "intercept": float(self.intercept)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LinearFit":
        return cls(
            scaler=Standardizer.from_dict(d["scaler"]),
            weights=np.array(d["weights"], dtype=float),
            intercept=float(d["intercept"]),
        )


def _design(X: np.ndarray, y: np.ndarray, standardize: bool):
    scaler = Standardizer.fit(X, scale=standardize)
    return scaler, scaler.transform(X), y - y.mean()


def fit_ols(
    X,
    y,
    *,
    standardize: bool = True,
    feature_mask: Optional[FeatureMask] = None,
    train_filter_m: float = math.inf,
) -> TrainedModel:
    """Least squares with intercept, solved by SVD (numpy lstsq) on the centred design.

    A rank-deficient design falls back to the minimum-norm solution and is
    flagged with ``singular_design``.
    """
    Xa, ya = check_xy(X, y)
    n, d = Xa.shape
    if n < d + 1:
        raise LearnerInputError(f"OLS needs at least d+1={d + 1} rows, got {n}")
    mask = resolve_mask(feature_mask, d)
    with stopwatch() as t:
        scaler, Z, yc = _design(Xa, ya, standardize)
        w, _, rank, _ = np.linalg.lstsq(Z, yc, rcond=None)
    singular = int(rank) < d
    if singular:
        logger.warning("OLS design is rank-deficient (rank %s < %s); using minimum-norm solution", rank, d)
    return TrainedModel(
        kind="ols",
        feature_mask=mask,
        hyperparameters={"standardize": bool(standardize)},
        fitted=LinearFit(scaler=scaler, weights=w, intercept=float(ya.mean())),
        train_filter_m=train_filter_m,
        train_time_s=t[0],
        flags={"singular_design": singular},
    )


def fit_ridge(
    X,
    y,
    lam: float = 1.0,
    *,
    standardize: bool = True,
    feature_mask: Optional[FeatureMask] = None,
    train_filter_m: float = math.inf,
) -> TrainedModel:
    """Ridge regression; the penalty lam * ||w||^2 applies to the standardized weights, never the intercept."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    Xa, ya = check_xy(X, y)
    d = Xa.shape[1]
    mask = resolve_mask(feature_mask, d)
    with stopwatch() as t:
        scaler, Z, yc = _design(Xa, ya, standardize)
        A = np.vstack([Z, math.sqrt(lam) * np.eye(d)])
        b = np.concatenate([yc, np.zeros(d)])
        w, _, _, _ = np.linalg.lstsq(A, b, rcond=None)
    return TrainedModel(
        kind="ridge",
        feature_mask=mask,
        hyperparameters={"lam": float(lam), "standardize": bool(standardize)},
        fitted=LinearFit(scaler=scaler, weights=w, intercept=float(ya.mean())),
        train_filter_m=train_filter_m,
        train_time_s=t[0],
    )


def _soft_threshold(x: float, a: float) -> float:
    if x > a:
        return x - a
    if x < -a:
        return x + a
    return 0.0


def fit_lasso(
    X,
    y,
    alpha: float,
    *,
    max_iter: int = 10_000,
    tol: float = 1e-10,
    feature_mask: Optional[FeatureMask] = None,
) -> TrainedModel:
    """L1-regularised least squares by cyclic coordinate descent on standardized columns.

    Objective: (1 / 2n) * ||y_c - Z w||^2 + alpha * ||w||_1.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    Xa, ya = check_xy(X, y)
    n, d = Xa.shape
    mask = resolve_mask(feature_mask, d)
    with stopwatch() as t:
        scaler, Z, yc = _design(Xa, ya, True)
        col_sq = (Z * Z).sum(axis=0) / n
        w = np.zeros(d)
        r = yc.copy()
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            max_delta = 0.0
            for j in range(d):
                if col_sq[j] == 0.0:
                    continue
                rho = float(Z[:, j] @ r) / n + col_sq[j] * w[j]
                new = _soft_threshold(rho, alpha) / col_sq[j]
                delta = new - w[j]
                if delta != 0.0:
                    r -= delta * Z[:, j]
                    w[j] = new
                    max_delta = max(max_delta, abs(delta))
            if max_delta < tol:
                break
        else:
            logger.warning("Lasso coordinate descent stopped at max_iter=%s", max_iter)
    logger.debug("Lasso alpha=%s converged in %s sweeps, %s nonzero", alpha, n_iter, int(np.count_nonzero(w)))
    return TrainedModel(
        kind="lasso",
        feature_mask=mask,
        hyperparameters={"alpha": float(alpha)},
        fitted=LinearFit(scaler=scaler, weights=w, intercept=float(ya.mean())),
        train_time_s=t[0],
    )
