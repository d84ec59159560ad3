from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from wifi_distance.core.config import EvalConfig, GAConfig
from wifi_distance.errors import LearnerInputError
from wifi_distance.evaluation import score_f_beta
from wifi_distance.fingerprints import PairRecord, PairTable
from wifi_distance.learners.linear import fit_ols
from wifi_distance.selection.masks import FeatureMask
from wifi_distance.services.artifact_store import write_frame

logger = logging.getLogger(__name__)

Pairs = Union[Sequence[PairRecord], PairTable]

EXHAUSTIVE_MAX_FEATURES = 10


class GAResult(NamedTuple):
    mask: FeatureMask
    history: List[float]

    @property
    def best_fitness(self) -> float:
        return self.history[-1]


def _table(pairs: Pairs) -> PairTable:
    return pairs if isinstance(pairs, PairTable) else PairTable.from_pairs(pairs)


class MaskFitness:
    """F_beta on validation of OLS fitted on the label-filtered training rows, cached per mask."""

    def __init__(self, train: Pairs, validation: Pairs, eval_cfg: EvalConfig, train_filter_m: float) -> None:
        tr = _table(train)
        keep = tr.y <= train_filter_m
        self.X_train = tr.X[keep]
        self.y_train = tr.y[keep]
        va = _table(validation)
        self.X_val = va.X
        self.y_val = va.y
        if self.y_val.shape[0] == 0:
            raise LearnerInputError("validation split is empty")
        self.eval_cfg = eval_cfg
        self.cache: Dict[str, float] = {}

    def score(self, bits: np.ndarray) -> float:
        cols = np.nonzero(bits)[0]
        try:
            model = fit_ols(self.X_train[:, cols], self.y_train)
        except ValueError as e:
            logger.warning("GA fitness for mask %s set to 0: %s", "".join(map(str, bits.astype(int))), e)
            return 0.0
        y_hat = model.predict(self.X_val[:, cols])
        return score_f_beta(self.y_val, y_hat, self.eval_cfg.beta, self.eval_cfg.proximity_threshold_m)

    def evaluate(self, population: np.ndarray, workers: int = 1) -> np.ndarray:
        keys = ["".join("1" if b else "0" for b in ind) for ind in population]
        todo: List[str] = []
        for k in keys:
            if k not in self.cache and k not in todo:
                todo.append(k)
        if todo:
            arrays = [np.array([c == "1" for c in k]) for k in todo]
            if workers > 1 and len(todo) > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    scores = list(pool.map(self.score, arrays))
            else:
                scores = [self.score(a) for a in arrays]
            self.cache.update(zip(todo, scores))
        return np.array([self.cache[k] for k in keys])


def _repair(ind: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if not ind.any():
        ind[int(rng.integers(ind.shape[0]))] = True
    return ind


def _tournament(fitness: np.ndarray, size: int, rng: np.random.Generator) -> int:
    picks = rng.integers(0, fitness.shape[0], size=size)
    # first drawn wins among equal fitness
    return int(picks[int(np.argmax(fitness[picks]))])


def ga_select(
    train_pairs: Pairs,
    val_pairs: Pairs,
    cfg: GAConfig,
    eval_cfg: EvalConfig,
    *,
    workers: int = 1,
) -> GAResult:
    """Genetic wrapper selection over feature masks.

    ``cfg.generations`` counts evaluated generations, the random initial
    population included, so the history has exactly that many entries. The
    history holds the best-ever fitness after each generation and is
    non-decreasing; the returned mask is the first mask reaching that value.
    All random choices come from one stream seeded by ``cfg.seed``; fitness is
    deterministic, so parallel evaluation does not change the result.
    """
    fit = MaskFitness(train_pairs, val_pairs, eval_cfg, cfg.train_filter_m)
    d = fit.X_train.shape[1]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    population = rng.random((cfg.population_size, d)) < 0.5
    for ind in population:
        _repair(ind, rng)
    fitness = fit.evaluate(population, workers)

    best_i = int(np.argmax(fitness))
    best_bits = population[best_i].copy()
    best_fit = float(fitness[best_i])
    history = [best_fit]
    logger.debug("GA generation 1/%s best=%.6f", cfg.generations, best_fit)

    for gen in range(2, cfg.generations + 1):
        elite_idx = np.argsort(-fitness, kind="stable")[: cfg.elitism]
        children = [population[i].copy() for i in elite_idx]
        while len(children) < cfg.population_size:
            a = population[_tournament(fitness, cfg.tournament_size, rng)]
            b = population[_tournament(fitness, cfg.tournament_size, rng)]
            if rng.random() < cfg.crossover_rate:
                child = np.where(rng.random(d) < 0.5, a, b)
            else:
                child = a.copy()
            child = child ^ (rng.random(d) < cfg.mutation_rate)
            children.append(_repair(child, rng))
        population = np.array(children)
        fitness = fit.evaluate(population, workers)
        gi = int(np.argmax(fitness))
        if fitness[gi] > best_fit:
            best_fit = float(fitness[gi])
            best_bits = population[gi].copy()
        history.append(best_fit)
        logger.debug("GA generation %s/%s best=%.6f", gen, cfg.generations, best_fit)

    mask = FeatureMask(tuple(bool(b) for b in best_bits))
    logger.info(
        "GA selected %s/%s features (f_beta=%.4f, %s distinct masks evaluated): %s",
        mask.count,
        d,
        best_fit,
        len(fit.cache),
        ",".join(mask.names) or mask.to_string(),
    )
    return GAResult(mask=mask, history=history)


def exhaustive_select(
    train_pairs: Pairs,
    val_pairs: Pairs,
    eval_cfg: EvalConfig,
    *,
    candidates: Optional[Sequence[int]] = None,
    train_filter_m: float = 25.0,
) -> GAResult:
    """Score every non-empty subset of ``candidates`` (at most ten columns).

    Subsets are visited by size, then lexicographically; the first best wins.
    The history lists the best-so-far score after each subset.
    """
    fit = MaskFitness(train_pairs, val_pairs, eval_cfg, train_filter_m)
    d = fit.X_train.shape[1]
    cols = list(range(d)) if candidates is None else sorted(set(int(c) for c in candidates))
    if not cols:
        raise ValueError("exhaustive search needs at least one candidate feature")
    if len(cols) > EXHAUSTIVE_MAX_FEATURES:
        raise ValueError(f"exhaustive search is limited to {EXHAUSTIVE_MAX_FEATURES} candidate features, got {len(cols)}")
    best_bits = np.zeros(d, dtype=bool)
    best_fit = -1.0
    history: List[float] = []
    for size in range(1, len(cols) + 1):
        for subset in itertools.combinations(cols, size):
            bits = np.zeros(d, dtype=bool)
            bits[list(subset)] = True
            score = float(fit.evaluate(bits[None, :])[0])
            if score > best_fit:
                best_fit, best_bits = score, bits
            history.append(best_fit)
    return GAResult(mask=FeatureMask(tuple(bool(b) for b in best_bits)), history=history)


def export_fitness_history(history: Sequence[float], path: Union[str, Path], *, lock_timeout_s: float = 30.0) -> Path:
    df = pd.DataFrame({"generation": np.arange(1, len(history) + 1), "best_f_beta": list(history)})
    return write_frame(path, df, lock_timeout_s=lock_timeout_s)
