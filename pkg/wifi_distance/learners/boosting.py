from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from wifi_distance.learners.base import TrainedModel, _floats, check_xy, resolve_mask, stopwatch
from wifi_distance.learners.tree import TreeFit, build_tree
from wifi_distance.selection.masks import FeatureMask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GbtFit:
    """Additive ensemble F(x) = base + learning_rate * sum(tree_t(x))."""

    kind = "gbt"

    base: float
    learning_rate: float
    trees: Tuple[TreeFit, ...]
    train_loss: Tuple[float, ...] = ()

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base, dtype=float)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": float(self.base),
            "learning_rate": float(self.learning_rate),
            "trees": [t.to_dict() for t in self.trees],
            "train_loss": _floats(np.asarray(self.train_loss, dtype=float)),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GbtFit":
        return cls(
            base=float(d["base"]),
            learning_rate=float(d["learning_rate"]),
            trees=tuple(TreeFit.from_dict(t) for t in d["trees"]),
            train_loss=tuple(float(x) for x in d.get("train_loss", [])),
        )


def fit_gbt(
    X,
    y,
    n_trees: int = 100,
    learning_rate: float = 0.1,
    depth: int = 4,
    *,
    min_samples_leaf: int = 1,
    subsample: float = 1.0,
    seed: int = 0,
    feature_mask: Optional[FeatureMask] = None,
    train_filter_m: float = math.inf,
) -> TrainedModel:
    """Squared-loss gradient boosting over CART trees.

    F0 is the training mean; each tree fits the current residuals (on a row
    subsample without replacement when subsample < 1). ``train_loss`` holds the
    training MSE of F0, F1, ... so it has n_trees + 1 entries.
    """
    n_trees = int(n_trees)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not 0 <= learning_rate <= 1:
        raise ValueError("learning_rate must be in [0, 1]")
    if not 0 < subsample <= 1:
        raise ValueError("subsample must be in (0, 1]")
    Xa, ya = check_xy(X, y)
    n = Xa.shape[0]
    mask = resolve_mask(feature_mask, Xa.shape[1])
    rng = np.random.default_rng(seed)
    n_rows = max(1, int(round(subsample * n)))

    with stopwatch() as t:
        base = float(ya.mean())
        F = np.full(n, base)
        losses = [float(np.mean((ya - F) ** 2))]
        trees = []
        for it in range(n_trees):
            residual = ya - F
            if n_rows < n:
                rows = np.sort(rng.choice(n, size=n_rows, replace=False))
                tree = build_tree(Xa[rows], residual[rows], max_depth=int(depth), min_samples_leaf=min_samples_leaf)
            else:
                tree = build_tree(Xa, residual, max_depth=int(depth), min_samples_leaf=min_samples_leaf)
            trees.append(tree)
            F = F + learning_rate * tree.predict(Xa)
            losses.append(float(np.mean((ya - F) ** 2)))
            logger.debug("GBT tree %s/%s train_mse=%.6g", it + 1, n_trees, losses[-1])

    return TrainedModel(
        kind="gbt",
        feature_mask=mask,
        hyperparameters={
            "n_trees": n_trees,
            "learning_rate": float(learning_rate),
            "depth": int(depth),
            "min_samples_leaf": int(min_samples_leaf),
            "subsample": float(subsample),
            "seed": int(seed),
        },
        fitted=GbtFit(base=base, learning_rate=float(learning_rate), trees=tuple(trees), train_loss=tuple(losses)),
        train_filter_m=train_filter_m,
        train_time_s=t[0],
    )
