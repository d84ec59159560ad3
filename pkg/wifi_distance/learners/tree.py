from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from wifi_distance.learners.base import TrainedModel, _floats, check_xy, resolve_mask, stopwatch
from wifi_distance.selection.masks import FeatureMask

LEAF = -1


@dataclass(frozen=True)
class TreeFit:
    """Binary regression tree stored as flat node arrays (feature == -1 marks a leaf).

    A row goes left when x[feature] <= threshold.
    """

    kind = "cart"

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    importances: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.nonzero(active)[0]
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": _floats(self.threshold),
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": _floats(self.value),
            "importances": _floats(self.importances),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TreeFit":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=float),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=float),
            importances=np.array(d["importances"], dtype=float),
        )


def _sse(y: np.ndarray) -> float:
    c = y - y.mean()
    return float(np.dot(c, c))


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> Optional[Tuple[int, float, float]]:
    """Exhaustive search for the split minimising the summed child SSE.

    Ties go to the lowest feature index, then the lowest threshold.
    Returns (feature, threshold, child_sse) or None when no split is admissible.
    """
    n, d = X.shape
    yc = y - y.mean()
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    best: Optional[Tuple[int, float, float]] = None
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = yc[order]
        cs = np.cumsum(ys)
        cq = np.cumsum(ys * ys)
        sl, ql = cs[:-1], cq[:-1]
        sr, qr = cs[-1] - sl, cq[-1] - ql
        child = (ql - sl * sl / nl) + (qr - sr * sr / nr)
        valid = size_ok & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        cand = np.where(valid, child, np.inf)
        i = int(np.argmin(cand))
        if best is None or cand[i] < best[2]:
            lo, hi = float(xs[i]), float(xs[i + 1])
            thr = lo + (hi - lo) / 2.0
            if not thr < hi:
                thr = lo
            best = (j, thr, float(cand[i]))
    return best


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
) -> TreeFit:
    """Greedy CART (squared-error criterion) on raw features; leaves predict the sample mean."""
    n, d = X.shape
    min_leaf = max(1, int(min_samples_leaf))
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []
    importances = np.zeros(d)

    def new_node(rows: np.ndarray) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    root = new_node(np.arange(n))
    stack: List[Tuple[int, np.ndarray, int]] = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ys = y[rows]
        if max_depth is not None and depth >= max_depth:
            continue
        if rows.shape[0] < 2 * min_leaf or np.ptp(ys) == 0.0:
            continue
        split = _best_split(X[rows], ys, min_leaf)
        if split is None:
            continue
        j, thr, child_sse = split
        go_left = X[rows, j] <= thr
        l_rows, r_rows = rows[go_left], rows[~go_left]
        importances[j] += max(0.0, _sse(ys) - child_sse)
        feature[node] = j
        threshold[node] = thr
        l_id = new_node(l_rows)
        r_id = new_node(r_rows)
        left[node] = l_id
        right[node] = r_id
        # right pushed first so the left subtree is expanded first
        stack.append((r_id, r_rows, depth + 1))
        stack.append((l_id, l_rows, depth + 1))

    total = importances.sum()
    if total > 0:
        importances = importances / total
    return TreeFit(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
        importances=importances,
    )


def fit_cart(
    X,
    y,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    *,
    feature_mask: Optional[FeatureMask] = None,
    train_filter_m: float = math.inf,
) -> TrainedModel:
    Xa, ya = check_xy(X, y)
    mask = resolve_mask(feature_mask, Xa.shape[1])
    depth = None if max_depth is None else int(max_depth)
    with stopwatch() as t:
        fitted = build_tree(Xa, ya, max_depth=depth, min_samples_leaf=int(min_samples_leaf))
    return TrainedModel(
        kind="cart",
        feature_mask=mask,
        hyperparameters={"max_depth": depth, "min_samples_leaf": int(min_samples_leaf)},
        fitted=fitted,
        train_filter_m=train_filter_m,
        train_time_s=t[0],
    )
