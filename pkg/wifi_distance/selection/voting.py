from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import chi2_contingency

from wifi_distance.core.config import EvalConfig
from wifi_distance.errors import DataError
from wifi_distance.fingerprints import PairRecord, PairTable
from wifi_distance.learners.base import Standardizer
from wifi_distance.learners.linear import fit_lasso
from wifi_distance.learners.tree import build_tree
from wifi_distance.services.artifact_store import write_frame

logger = logging.getLogger(__name__)

VOTERS = ("chi2", "cart_importance", "lasso", "rfe")

N_BINS = 10
LASSO_ALPHA_RATIO = 0.1
RFE_KEEP = 7
CART_MAX_DEPTH = 8
CART_MIN_LEAF = 5


class DegenerateLabels(DataError):
    """Binarised labels contain a single class."""


@dataclass(frozen=True)
class VoteTable:
    feature_names: Tuple[str, ...]
    votes: np.ndarray  # (n_features, len(VOTERS)) bool
    scores: Dict[str, np.ndarray]

    @property
    def totals(self) -> np.ndarray:
        return self.votes.sum(axis=1)

    def votes_for(self, feature: str) -> int:
        return int(self.totals[self.feature_names.index(feature)])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.votes.astype(int), columns=list(VOTERS))
        df.insert(0, "feature", list(self.feature_names))
        for name in VOTERS:
            df[f"{name}_score"] = self.scores[name]
        df["total"] = self.totals
        return df


def _top_half(scores: np.ndarray) -> np.ndarray:
    k = math.ceil(scores.shape[0] / 2)
    cutoff = np.sort(scores)[::-1][k - 1]
    return (scores >= cutoff) & (scores > 0)


def decile_bins(x: np.ndarray) -> np.ndarray:
    edges = np.unique(np.quantile(x, np.linspace(0, 1, N_BINS + 1))[1:-1])
    return np.searchsorted(edges, x, side="right")


def chi2_scores(X: np.ndarray, positive: np.ndarray) -> np.ndarray:
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        bins = decile_bins(X[:, j])
        n_bins = int(bins.max()) + 1
        table = np.zeros((n_bins, 2))
        np.add.at(table, (bins, positive.astype(int)), 1)
        table = table[table.sum(axis=1) > 0]
        if table.shape[0] < 2:
            continue
        out[j] = float(chi2_contingency(table, correction=False)[0])
    return out


def cart_importances(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return build_tree(X, y, max_depth=CART_MAX_DEPTH, min_samples_leaf=CART_MIN_LEAF).importances


def lasso_coefficients(X: np.ndarray, y: np.ndarray, ratio: float = LASSO_ALPHA_RATIO) -> np.ndarray:
    """Standardized lasso weights at alpha = ratio * alpha_max (alpha_max zeroes every weight)."""
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    alpha_max = float(np.max(np.abs(Z.T @ (y - y.mean())))) / X.shape[0]
    if alpha_max == 0.0:
        return np.zeros(X.shape[1])
    return fit_lasso(X, y, alpha=ratio * alpha_max).fitted.weights


def rfe_survivors(X: np.ndarray, y: np.ndarray, keep: int = RFE_KEEP) -> Tuple[np.ndarray, np.ndarray]:
    """Backward elimination with OLS on standardized columns.

    Each round drops the column with the smallest |weight| (lowest index on
    ties). Returns the survivor mask and the round each column was dropped in
    (columns still alive get the number of rounds + 1).
    """
    d = X.shape[1]
    Z = Standardizer.fit(X).transform(X)
    yc = y - y.mean()
    alive = list(range(d))
    dropped_at = np.zeros(d)
    rnd = 0
    while len(alive) > keep:
        rnd += 1
        w, *_ = np.linalg.lstsq(Z[:, alive], yc, rcond=None)
        worst = alive[int(np.argmin(np.abs(w)))]
        alive.remove(worst)
        dropped_at[worst] = rnd
    survivors = np.zeros(d, dtype=bool)
    survivors[alive] = True
    dropped_at[survivors] = rnd + 1
    return survivors, dropped_at


def importance_votes(train_pairs: Union[Sequence[PairRecord], PairTable], eval_cfg: EvalConfig) -> VoteTable:
    """Four feature-importance voters over the training pairs.

    chi2 and cart_importance vote for their top half by score (scores must
    be > 0); lasso votes for nonzero weights; rfe votes for the survivors of
    elimination down to seven features. Rows are put in a canonical order
    first so the result does not depend on the input row order.
    """
    table = train_pairs if isinstance(train_pairs, PairTable) else PairTable.from_pairs(train_pairs)
    if len(table) == 0:
        raise DataError("importance voting needs at least one training pair")
    order = np.lexsort(np.column_stack([table.X, table.y]).T[::-1])
    X = table.X[order]
    y = table.y[order]
    positive = y < eval_cfg.proximity_threshold_m
    if positive.all() or not positive.any():
        raise DegenerateLabels(
            f"all {len(y)} training labels fall on one side of {eval_cfg.proximity_threshold_m} m"
        )

    chi = chi2_scores(X, positive)
    imp = cart_importances(X, y)
    lasso_w = lasso_coefficients(X, y)
    survivors, dropped_at = rfe_survivors(X, y, keep=min(RFE_KEEP, X.shape[1]))

    votes = np.column_stack([_top_half(chi), _top_half(imp), lasso_w != 0.0, survivors])
    vt = VoteTable(
        feature_names=tuple(table.feature_names),
        votes=votes,
        scores={"chi2": chi, "cart_importance": imp, "lasso": np.abs(lasso_w), "rfe": dropped_at},
    )
    logger.info(
        "Importance votes over %s pairs: %s",
        len(y),
        ", ".join(f"{n}={t}" for n, t in zip(vt.feature_names, vt.totals)),
    )
    return vt


def export_votes(table: VoteTable, path: Union[str, Path], *, lock_timeout_s: float = 30.0) -> Path:
    return write_frame(path, table.to_frame(), lock_timeout_s=lock_timeout_s)
