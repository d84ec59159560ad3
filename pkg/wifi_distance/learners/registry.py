from __future__ import annotations

import math
from typing import Any, Callable, Dict, Mapping, Optional

from wifi_distance.core.config import LEARNER_KINDS
from wifi_distance.learners.base import Fitted, TrainedModel
from wifi_distance.learners.boosting import GbtFit, fit_gbt
from wifi_distance.learners.knn import KnnFit, fit_knn
from wifi_distance.learners.linear import LinearFit, fit_lasso, fit_ols, fit_ridge
from wifi_distance.learners.tree import TreeFit, fit_cart
from wifi_distance.selection.masks import FeatureMask

_FITTED_TYPES: Dict[str, Callable[[Mapping[str, Any]], Fitted]] = {
    "ols": LinearFit.from_dict,
    "ridge": LinearFit.from_dict,
    "lasso": LinearFit.from_dict,
    "knn": KnnFit.from_dict,
    "cart": TreeFit.from_dict,
    "gbt": GbtFit.from_dict,
}

# Hyperparameter names each fitter accepts.
_ALLOWED: Dict[str, tuple[str, ...]] = {
    "ols": ("standardize",),
    "ridge": ("lam", "standardize"),
    "knn": ("k", "weighting"),
    "cart": ("max_depth", "min_samples_leaf"),
    "gbt": ("n_trees", "learning_rate", "depth", "min_samples_leaf", "subsample", "seed"),
    "lasso": ("alpha",),
}


def fit_model(
    kind: str,
    X,
    y,
    hyperparameters: Optional[Mapping[str, Any]] = None,
    *,
    feature_mask: Optional[FeatureMask] = None,
    train_filter_m: float = math.inf,
    seed: Optional[int] = None,
) -> TrainedModel:
    """Dispatch to the fitter for ``kind``; ``seed`` only reaches stochastic learners."""
    params = dict(hyperparameters or {})
    if kind not in _ALLOWED:
        raise ValueError(f"unknown learner kind '{kind}' (expected one of {LEARNER_KINDS})")
    unknown = set(params) - set(_ALLOWED[kind])
    if unknown:
        raise ValueError(f"unknown hyperparameters for {kind}: {sorted(unknown)}")
    common = {"feature_mask": feature_mask}
    if kind == "ols":
        return fit_ols(X, y, train_filter_m=train_filter_m, **common, **params)
    if kind == "ridge":
        return fit_ridge(X, y, train_filter_m=train_filter_m, **common, **params)
    if kind == "knn":
        return fit_knn(X, y, train_filter_m=train_filter_m, **common, **params)
    if kind == "cart":
        return fit_cart(X, y, train_filter_m=train_filter_m, **common, **params)
    if kind == "gbt":
        if seed is not None:
            params["seed"] = int(seed)
        return fit_gbt(X, y, train_filter_m=train_filter_m, **common, **params)
    return fit_lasso(X, y, **common, **params)


def fitted_from_dict(kind: str, payload: Mapping[str, Any]) -> Fitted:
    try:
        loader = _FITTED_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown model kind '{kind}'") from None
    return loader(payload)
