"""End-to-end driver: pairs, split, filter, selection, training or tuning, evaluation, report.

The test split and isolated datasets are only touched by the final evaluation
step; selection and tuning see train and validation only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence

import pandas as pd

from wifi_distance.core.config import LEARNER_KINDS, EvalConfig, RunConfig
from wifi_distance.evaluation import (
    EvalReport,
    classify_proximity,
    evaluate,
    export_histogram,
    f_beta,
    mae,
    precision_recall,
    rmse,
)
from wifi_distance.fingerprints import Fingerprint, PairRecord, filter_by_label, generate_pairs_by_dataset
from wifi_distance.learners.base import TrainedModel
from wifi_distance.learners.linear import fit_ols
from wifi_distance.learners.registry import fit_model
from wifi_distance.learners.tuning import random_search
from wifi_distance.selection.genetic import export_fitness_history, ga_select
from wifi_distance.selection.masks import FeatureMask, apply_mask
from wifi_distance.selection.voting import DegenerateLabels, export_votes, importance_votes
from wifi_distance.services.artifact_store import ArtifactStore
from wifi_distance.services.dataset_service import check_split_parts, partition_pairs, split_pool, write_split
from wifi_distance.services.report_service import write_report

logger = logging.getLogger(__name__)

DEFAULT_SWEEP_THRESHOLDS = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 60.0, 80.0, math.inf)


class SweepRow(NamedTuple):
    threshold_m: float
    f_beta: float
    precision: float
    recall: float
    rmse: float
    n_train: int


def sweep_thresholds(
    train: Sequence[PairRecord],
    validation: Sequence[PairRecord],
    eval_cfg: EvalConfig,
    thresholds: Iterable[float] = DEFAULT_SWEEP_THRESHOLDS,
    *,
    mask: Optional[FeatureMask] = None,
) -> List[SweepRow]:
    """OLS trained on the train split filtered at each threshold, scored on validation.

    Thresholds that leave too few rows for OLS are skipped with a warning.
    """
    mask = mask or FeatureMask.full()
    va = apply_mask(validation, mask)
    rows: List[SweepRow] = []
    for t in thresholds:
        kept = train if math.isinf(t) else filter_by_label(train, t)
        tr = apply_mask(kept, mask)
        if len(tr) < mask.count + 1:
            logger.warning("Threshold %s m leaves %s training pairs; skipped", t, len(tr))
            continue
        model = fit_ols(tr.X, tr.y, feature_mask=mask, train_filter_m=t)
        y_hat = model.predict(va.X)
        p, r, _ = precision_recall(classify_proximity(va.y, y_hat, eval_cfg.proximity_threshold_m))
        rows.append(SweepRow(float(t), f_beta(p, r, eval_cfg.beta), p, r, rmse(va.y, y_hat), len(tr)))
        logger.debug("Sweep threshold=%s n_train=%s f_beta=%.4f", t, len(tr), rows[-1].f_beta)
    return rows


def sweep_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame([r._asdict() for r in rows], columns=list(SweepRow._fields))


def fit_or_tune(
    kind: str,
    cfg: RunConfig,
    train: Sequence[PairRecord],
    validation: Sequence[PairRecord],
    mask: FeatureMask,
    *,
    tune: bool,
    workers: int = 1,
) -> TrainedModel:
    """Train ``kind`` on the already-filtered train split, tuning it when asked and its search space is non-empty."""
    base = cfg.learners.get(kind, {})
    limit = cfg.pipeline.train_filter_m
    if tune and cfg.search.for_kind(kind):
        return random_search(
            kind,
            cfg.search,
            train,
            validation,
            cfg.eval,
            mask=mask,
            base_params=base,
            train_filter_m=limit,
            workers=workers,
        )
    tr = apply_mask(train, mask)
    params = dict(base)
    if kind == "knn":
        params["k"] = min(int(params.get("k", 5)), len(tr))
    return fit_model(kind, tr.X, tr.y, params, feature_mask=mask, train_filter_m=limit, seed=cfg.eval.seed)


def refitter(model: TrainedModel, train: Sequence[PairRecord]):
    """Callable seed -> model refitted on the same rows with the same hyperparameters."""
    tr = apply_mask(train, model.feature_mask)

    def refit(seed: int) -> TrainedModel:
        return fit_model(
            model.kind,
            tr.X,
            tr.y,
            dict(model.hyperparameters),
            feature_mask=model.feature_mask,
            train_filter_m=model.train_filter_m,
            seed=seed,
        )

    return refit


@dataclass
class PipelineResult:
    mask: FeatureMask
    ga_history: List[float]
    split_counts: Dict[str, int]
    models: Dict[str, TrainedModel] = field(default_factory=dict)
    reports: List[EvalReport] = field(default_factory=list)
    validation_reports: List[EvalReport] = field(default_factory=list)


def run_pipeline(
    cfg: RunConfig,
    fingerprints: Sequence[Fingerprint],
    store: ArtifactStore,
    *,
    isolated: Iterable[str] = (),
    learners: Sequence[str] = LEARNER_KINDS,
    tune: bool = True,
    workers: int = 1,
) -> PipelineResult:
    isolated = frozenset(isolated)
    pairs = generate_pairs_by_dataset(fingerprints, cfg.pipeline, workers=workers)
    pool, held = partition_pairs(pairs, isolated)
    store.export_pairs("pairs.csv", pool)
    for ds, ds_pairs in held.items():
        store.export_pairs(f"pairs_{ds}.csv", ds_pairs)

    split = split_pool(pool, cfg.pipeline.split_fractions, cfg.pipeline.seed, isolated=isolated)
    write_split(split, store.path("split.csv"), lock_timeout_s=store.lock_timeout_s)
    train = split.subset(pool, "train")
    validation = split.subset(pool, "validation")
    test = split.subset(pool, "test")
    check_split_parts({"train": train, "validation": validation, "test": test}, isolated)
    for name, part in (("train", train), ("validation", validation), ("test", test)):
        store.export_pairs(f"{name}.csv", part)

    train_f = filter_by_label(train, cfg.pipeline.train_filter_m)
    logger.info("Training filter %s m keeps %s of %s train pairs", cfg.pipeline.train_filter_m, len(train_f), len(train))

    try:
        votes = importance_votes(train_f, cfg.eval)
        export_votes(votes, store.path("votes.csv"), lock_timeout_s=store.lock_timeout_s)
    except DegenerateLabels as e:
        logger.warning("Importance voting skipped: %s", e)

    ga = ga_select(train, validation, cfg.ga, cfg.eval, workers=workers)
    store.write_mask("mask.txt", ga.mask)
    export_fitness_history(ga.history, store.path("ga_history.csv"), lock_timeout_s=store.lock_timeout_s)

    result = PipelineResult(mask=ga.mask, ga_history=list(ga.history), split_counts=split.counts())
    targets = [("test", test)] + sorted(held.items())
    for kind in learners:
        model = fit_or_tune(kind, cfg, train_f, validation, ga.mask, tune=tune, workers=workers)
        store.save_model(f"model_{kind}.json", model)
        result.models[kind] = model
        refit = refitter(model, train_f)
        val_report = evaluate(model, validation, cfg.eval, refit=refit, dataset_id="validation")
        store.write_json(f"eval_{kind}_validation.json", val_report.to_dict())
        export_histogram(val_report, store.path(f"hist_{kind}_validation.csv"), lock_timeout_s=store.lock_timeout_s)
        result.validation_reports.append(val_report)
        for ds, ds_pairs in targets:
            if not ds_pairs:
                logger.warning("No %s pairs to evaluate %s on", ds, kind)
                continue
            report = evaluate(model, ds_pairs, cfg.eval, refit=refit, dataset_id=ds)
            store.write_json(f"eval_{kind}_{ds}.json", report.to_dict())
            export_histogram(report, store.path(f"hist_{kind}_{ds}.csv"), lock_timeout_s=store.lock_timeout_s)
            result.reports.append(report)

    write_report(result.validation_reports + result.reports, store.root, lock_timeout_s=store.lock_timeout_s)
    return result


def constant_baseline_mae(train: Sequence[PairRecord], pairs: Sequence[PairRecord], max_label_m: Optional[float] = None) -> float:
    """MAE of predicting the mean training label, optionally on pairs with label <= max_label_m."""
    mean = sum(p.label_m for p in train) / len(train)
    subset = pairs if max_label_m is None else [p for p in pairs if p.label_m <= max_label_m]
    labels = [p.label_m for p in subset]
    return mae(labels, [mean] * len(labels))
