from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Generator, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from wifi_distance.errors import LearnerInputError
from wifi_distance.fingerprints import PairRecord, PairTable
from wifi_distance.selection.masks import FeatureMask, apply_mask


class Fitted(Protocol):
    kind: str

    def predict(self, X: np.ndarray) -> np.ndarray: ...

    def to_dict(self) -> Dict[str, Any]: ...


@dataclass(frozen=True)
class Standardizer:
    """Per-column centring and scaling fitted on training rows only."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, *, scale: bool = True) -> "Standardizer":
        mean = X.mean(axis=0) if X.shape[0] else np.zeros(X.shape[1])
        if scale and X.shape[0]:
            std = X.std(axis=0)
            s = np.where(std > 0, std, 1.0)
        else:
            s = np.ones(X.shape[1])
        return cls(mean=mean, scale=s)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def to_dict(self) -> Dict[str, Any]:
        return {"mean": _floats(self.mean), "scale": _floats(self.scale)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Standardizer":
        return cls(mean=np.array(d["mean"], dtype=float), scale=np.array(d["scale"], dtype=float))


def _floats(a: np.ndarray) -> List[float]:
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def check_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    Xa = np.asarray(X, dtype=float)
    ya = np.asarray(y, dtype=float)
    if Xa.ndim == 1:
        Xa = Xa.reshape(-1, 1)
    if Xa.ndim != 2 or ya.ndim != 1 or Xa.shape[0] != ya.shape[0]:
        raise LearnerInputError(f"X must be (n, d) and y (n,), got {Xa.shape} and {ya.shape}")
    if Xa.shape[0] == 0:
        raise LearnerInputError("cannot fit on zero rows")
    if not (np.all(np.isfinite(Xa)) and np.all(np.isfinite(ya))):
        raise LearnerInputError("X and y must be finite")
    return Xa, ya


@contextmanager
def stopwatch() -> Generator[List[float], None, None]:
    box: List[float] = [0.0]
    t0 = time.perf_counter()
    try:
        yield box
    finally:
        box[0] = time.perf_counter() - t0


@dataclass(frozen=True)
class TrainedModel:
    """A fitted learner together with the feature mask and settings it was trained under."""

    kind: str
    feature_mask: FeatureMask
    hyperparameters: Mapping[str, Any]
    fitted: Fitted
    train_filter_m: float = math.inf
    train_time_s: float = 0.0
    flags: Mapping[str, bool] = field(default_factory=dict)

    @property
    def stochastic(self) -> bool:
        return self.kind == "gbt" and float(self.hyperparameters.get("subsample", 1.0)) < 1.0

    def predict(self, X) -> np.ndarray:
        Xa = np.asarray(X, dtype=float)
        if Xa.ndim == 1:
            Xa = Xa.reshape(-1, 1)
        if Xa.shape[1] != self.feature_mask.count:
            raise ValueError(f"model expects {self.feature_mask.count} columns, got {Xa.shape[1]}")
        return self.fitted.predict(Xa)

    def predict_pairs(self, pairs: Union[Sequence[PairRecord], PairTable]) -> np.ndarray:
        table = apply_mask(pairs, self.feature_mask)
        if len(table) == 0:
            return np.empty(0, dtype=float)
        return self.predict(table.X)


def resolve_mask(feature_mask: Optional[FeatureMask], n_columns: int) -> FeatureMask:
    if feature_mask is None:
        return FeatureMask.full(n_columns)
    if feature_mask.count != n_columns:
        raise ValueError(f"mask selects {feature_mask.count} features but X has {n_columns} columns")
    return feature_mask
