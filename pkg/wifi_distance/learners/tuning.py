from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from wifi_distance.core.config import EvalConfig, HyperSpace, ParamRange
from wifi_distance.errors import LearnerInputError
from wifi_distance.evaluation import score_f_beta
from wifi_distance.fingerprints import PairRecord, PairTable
from wifi_distance.learners.base import TrainedModel
from wifi_distance.learners.registry import fit_model
from wifi_distance.selection.masks import FeatureMask, apply_mask

logger = logging.getLogger(__name__)

Pairs = Union[Sequence[PairRecord], PairTable]


@dataclass(frozen=True)
class Trial:
    draw: int
    seed: int
    hyperparameters: Dict[str, Any]
    f_beta: float
    model: TrainedModel


def sample_params(space: Mapping[str, ParamRange], rng: np.random.Generator) -> Dict[str, Any]:
    """One draw per dimension, in the space's key order."""
    out: Dict[str, Any] = {}
    for name, r in space.items():
        if r.choices is not None:
            out[name] = r.choices[int(rng.integers(len(r.choices)))]
            continue
        lo, hi = float(r.low), float(r.high)
        if r.integer:
            out[name] = int(rng.integers(math.ceil(lo), math.floor(hi) + 1))
        elif r.log:
            out[name] = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
        else:
            out[name] = float(rng.uniform(lo, hi))
    return out


def draw_seeds(seed: int, n_draws: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_draws)]


def search_trials(
    kind: str,
    space: HyperSpace,
    train: Pairs,
    validation: Pairs,
    eval_cfg: EvalConfig,
    *,
    mask: Optional[FeatureMask] = None,
    base_params: Optional[Mapping[str, Any]] = None,
    train_filter_m: float = math.inf,
    workers: int = 1,
) -> List[Trial]:
    """Fit and score one model per draw; draw i uses its own SeedSequence child, so order of execution is irrelevant."""
    mask = mask or FeatureMask.full()
    tr = apply_mask(train, mask)
    va = apply_mask(validation, mask)
    if len(tr) == 0 or len(va) == 0:
        raise LearnerInputError("random search needs non-empty train and validation splits")
    dims = space.for_kind(kind)
    seeds = draw_seeds(space.seed, space.n_draws)

    def run(i: int) -> Trial:
        params = {**dict(base_params or {}), **sample_params(dims, np.random.default_rng(seeds[i]))}
        if kind == "knn":
            params["k"] = min(int(params.get("k", 5)), len(tr))
        model = fit_model(
            kind,
            tr.X,
            tr.y,
            params,
            feature_mask=mask,
            train_filter_m=train_filter_m,
            seed=seeds[i],
        )
        score = score_f_beta(va.y, model.predict(va.X), eval_cfg.beta, eval_cfg.proximity_threshold_m)
        logger.debug("random_search %s draw %s params=%s f_beta=%.6f", kind, i, params, score)
        return Trial(draw=i, seed=seeds[i], hyperparameters=params, f_beta=score, model=model)

    if workers > 1 and space.n_draws > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, range(space.n_draws)))
    return [run(i) for i in range(space.n_draws)]


def best_trial(trials: Sequence[Trial]) -> Trial:
    """Highest F_beta; the earliest draw wins ties."""
    best = trials[0]
    for t in trials[1:]:
        if t.f_beta > best.f_beta:
            best = t
    return best


def random_search(
    kind: str,
    space: HyperSpace,
    train: Pairs,
    validation: Pairs,
    eval_cfg: EvalConfig,
    *,
    mask: Optional[FeatureMask] = None,
    base_params: Optional[Mapping[str, Any]] = None,
    train_filter_m: float = math.inf,
    workers: int = 1,
) -> TrainedModel:
    trials = search_trials(
        kind,
        space,
        train,
        validation,
        eval_cfg,
        mask=mask,
        base_params=base_params,
        train_filter_m=train_filter_m,
        workers=workers,
    )
    best = best_trial(trials)
    logger.info(
        "random_search %s: %s draws, best draw %s f_beta=%.4f params=%s",
        kind,
        len(trials),
        best.draw,
        best.f_beta,
        best.hyperparameters,
    )
    return best.model
