from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from wifi_distance.core.config import EvalConfig
from wifi_distance.errors import DataError
from wifi_distance.fingerprints import PairRecord, PairTable
from wifi_distance.learners.base import TrainedModel, stopwatch
from wifi_distance.services.artifact_store import atomic_write_text

logger = logging.getLogger(__name__)


class LengthMismatch(DataError):
    def __init__(self, n_true: int, n_pred: int):
        super().__init__(f"y has {n_true} values but predictions have {n_pred}")


class EmptyEvalSet(DataError):
    """No pairs to evaluate on."""


def _check(y, y_hat) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y, dtype=float).ravel()
    b = np.asarray(y_hat, dtype=float).ravel()
    if a.shape[0] != b.shape[0] or a.shape[0] == 0:
        raise LengthMismatch(a.shape[0], b.shape[0])
    return a, b


def mse(y, y_hat) -> float:
    a, b = _check(y, y_hat)
    d = a - b
    return float(np.mean(d * d))


def rmse(y, y_hat) -> float:
    return math.sqrt(mse(y, y_hat))


def mae(y, y_hat) -> float:
    a, b = _check(y, y_hat)
    return float(np.mean(np.abs(a - b)))


class Confusion(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def classify_proximity(y, y_hat, threshold_m: float) -> Confusion:
    """Confusion counts for "closer than threshold_m"; strict < on both the label and the prediction."""
    if not threshold_m > 0:
        raise ValueError("threshold_m must be > 0")
    a, b = _check(y, y_hat)
    actual = a < threshold_m
    predicted = b < threshold_m
    return Confusion(
        tp=int(np.count_nonzero(actual & predicted)),
        fp=int(np.count_nonzero(~actual & predicted)),
        fn=int(np.count_nonzero(actual & ~predicted)),
        tn=int(np.count_nonzero(~actual & ~predicted)),
    )


def precision_recall(c: Confusion) -> Tuple[float, float, Dict[str, bool]]:
    """Precision and recall; an undefined ratio (zero denominator) is reported as 0 and flagged."""
    flags = {"precision_undefined": c.tp + c.fp == 0, "recall_undefined": c.tp + c.fn == 0}
    precision = 0.0 if flags["precision_undefined"] else c.tp / (c.tp + c.fp)
    recall = 0.0 if flags["recall_undefined"] else c.tp / (c.tp + c.fn)
    return precision, recall, flags


def f_beta(precision: float, recall: float, beta: float) -> float:
    """(1 + b^2) * P * R / (b^2 * P + R); 0 when both are 0."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1.0 + b2) * precision * recall / denom


def score_f_beta(y, y_hat, beta: float, threshold_m: float) -> float:
    p, r, _ = precision_recall(classify_proximity(y, y_hat, threshold_m))
    return f_beta(p, r, beta)


def histogram(y, y_hat, bin_m: float = 1.0) -> Dict[Tuple[int, int], int]:
    """2-D counts keyed by (floor(y / bin_m), floor(y_hat / bin_m))."""
    a, b = _check(y, y_hat)
    ab = np.floor(a / bin_m).astype(np.int64)
    pb = np.floor(b / bin_m).astype(np.int64)
    keys, counts = np.unique(np.stack([ab, pb], axis=1), axis=0, return_counts=True)
    return {(int(k[0]), int(k[1])): int(c) for k, c in zip(keys, counts)}


@dataclass
class EvalReport:
    model_kind: str
    dataset_id: str
    n_pairs: int
    precision: float
    recall: float
    f_beta: float
    f_beta_std: float
    rmse: float
    mae: float
    mse: float
    train_time_s: float
    test_time_s: float
    confusion: Confusion
    histogram: Dict[Tuple[int, int], int]
    repeats: int = 1
    beta: float = 0.05
    threshold_m: float = 4.0
    histogram_bin_m: float = 1.0
    flags: Dict[str, bool] = field(default_factory=dict)
    restricted_to_m: Optional[float] = None
    restricted: Optional["EvalReport"] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model_kind": self.model_kind,
            "dataset_id": self.dataset_id,
            "n_pairs": self.n_pairs,
            "precision": self.precision,
            "recall": self.recall,
            "f_beta": self.f_beta,
            "f_beta_std": self.f_beta_std,
            "rmse": self.rmse,
            "mae": self.mae,
            "mse": self.mse,
            "train_time_s": self.train_time_s,
            "test_time_s": self.test_time_s,
            "confusion": self.confusion._asdict(),
            "histogram": [[a, p, c] for (a, p), c in sorted(self.histogram.items())],
            "repeats": self.repeats,
            "beta": self.beta,
            "threshold_m": self.threshold_m,
            "histogram_bin_m": self.histogram_bin_m,
            "flags": dict(self.flags),
            "restricted_to_m": self.restricted_to_m,
            "restricted": self.restricted.to_dict() if self.restricted is not None else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EvalReport":
        restricted = d.get("restricted")
        return cls(
            model_kind=str(d["model_kind"]),
            dataset_id=str(d["dataset_id"]),
            n_pairs=int(d["n_pairs"]),
            precision=float(d["precision"]),
            recall=float(d["recall"]),
            f_beta=float(d["f_beta"]),
            f_beta_std=float(d["f_beta_std"]),
            rmse=float(d["rmse"]),
            mae=float(d["mae"]),
            mse=float(d["mse"]),
            train_time_s=float(d["train_time_s"]),
            test_time_s=float(d["test_time_s"]),
            confusion=Confusion(**{k: int(v) for k, v in d["confusion"].items()}),
            histogram={(int(a), int(p)): int(c) for a, p, c in d["histogram"]},
            repeats=int(d.get("repeats", 1)),
            beta=float(d.get("beta", 0.05)),
            threshold_m=float(d.get("threshold_m", 4.0)),
            histogram_bin_m=float(d.get("histogram_bin_m", 1.0)),
            flags={k: bool(v) for k, v in (d.get("flags") or {}).items()},
            restricted_to_m=None if d.get("restricted_to_m") is None else float(d["restricted_to_m"]),
            restricted=cls.from_dict(restricted) if restricted else None,
        )


def _score_once(y: np.ndarray, y_hat: np.ndarray, cfg: EvalConfig) -> Dict[str, Any]:
    conf = classify_proximity(y, y_hat, cfg.proximity_threshold_m)
    p, r, flags = precision_recall(conf)
    return {
        "precision": p,
        "recall": r,
        "f_beta": f_beta(p, r, cfg.beta),
        "rmse": rmse(y, y_hat),
        "mae": mae(y, y_hat),
        "mse": mse(y, y_hat),
        "confusion": conf,
        "flags": flags,
    }


def _summarise(
    kind: str,
    dataset_id: str,
    y: np.ndarray,
    runs: Sequence[np.ndarray],
    cfg: EvalConfig,
    train_time_s: float,
    test_time_s: float,
) -> EvalReport:
    scores = [_score_once(y, y_hat, cfg) for y_hat in runs]
    first = scores[0]
    fb = np.array([s["f_beta"] for s in scores])
    flags = {k: any(s["flags"][k] for s in scores) for k in first["flags"]}
    for name, undefined in flags.items():
        if undefined:
            logger.warning("%s on %s: %s (reported as 0)", kind, dataset_id, name.replace("_", " "))
    return EvalReport(
        model_kind=kind,
        dataset_id=dataset_id,
        n_pairs=int(y.shape[0]),
        precision=float(np.mean([s["precision"] for s in scores])),
        recall=float(np.mean([s["recall"] for s in scores])),
        f_beta=float(fb.mean()),
        f_beta_std=float(fb.std()) if len(scores) > 1 else 0.0,
        rmse=float(np.mean([s["rmse"] for s in scores])),
        mae=float(np.mean([s["mae"] for s in scores])),
        mse=float(np.mean([s["mse"] for s in scores])),
        train_time_s=train_time_s,
        test_time_s=test_time_s,
        confusion=first["confusion"],
        histogram=histogram(y, runs[0], cfg.histogram_bin_m),
        repeats=len(scores),
        beta=cfg.beta,
        threshold_m=cfg.proximity_threshold_m,
        histogram_bin_m=cfg.histogram_bin_m,
        flags=flags,
    )


def repeat_seeds(seed: int, repeats: int) -> List[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(repeats)]


def evaluate(
    model: TrainedModel,
    pairs: Union[Sequence[PairRecord], PairTable],
    cfg: EvalConfig,
    *,
    refit: Optional[Callable[[int], TrainedModel]] = None,
    dataset_id: Optional[str] = None,
) -> EvalReport:
    """Score ``model`` on ``pairs``.

    Stochastic models are refitted through ``refit(seed)`` for each of
    ``cfg.repeats`` derived seeds; deterministic models, and stochastic ones
    without ``refit`` (a warning is logged), are scored once and
    report f_beta_std = 0. The confusion counts and histogram belong to the
    first run. When ``cfg.restrict_to_max_label_m`` is set a second report on
    pairs with label <= that value is attached as ``restricted``.
    """
    table = pairs if isinstance(pairs, PairTable) else PairTable.from_pairs(pairs)
    if len(table) == 0:
        raise EmptyEvalSet("cannot evaluate on an empty pair set")
    ds = dataset_id or (table.dataset_ids[0] if len(set(table.dataset_ids)) == 1 else "mixed")

    models = [model]
    train_times = [model.train_time_s]
    if model.stochastic and refit is not None and cfg.repeats > 1:
        models = [refit(s) for s in repeat_seeds(cfg.seed, cfg.repeats)]
        train_times = [m.train_time_s for m in models]
    elif model.stochastic and cfg.repeats > 1:
        logger.warning(
            "%s is stochastic but no refit source was given; scored once, f_beta_std reported as 0",
            model.kind,
        )

    runs: List[np.ndarray] = []
    test_times: List[float] = []
    for m in models:
        with stopwatch() as t:
            runs.append(m.predict_pairs(table))
        test_times.append(t[0])
    if any(not np.all(np.isfinite(r)) for r in runs):
        raise DataError(f"{model.kind} produced non-finite predictions on {ds}")

    report = _summarise(model.kind, ds, table.y, runs, cfg, float(np.mean(train_times)), float(np.mean(test_times)))

    limit = cfg.restrict_to_max_label_m
    if limit is not None:
        keep = table.y <= limit
        report.restricted_to_m = float(limit)
        if keep.any():
            report.restricted = replace(
                _summarise(model.kind, ds, table.y[keep], [r[keep] for r in runs], cfg, report.train_time_s, report.test_time_s),
                restricted_to_m=float(limit),
            )
        else:
            logger.warning("No pairs in %s with label <= %s m; restricted report skipped", ds, limit)
    logger.info(
        "Evaluated %s on %s: n=%s f_beta=%.4f rmse=%.3f",
        model.kind,
        ds,
        report.n_pairs,
        report.f_beta,
        report.rmse,
    )
    return report


def histogram_frame(report: EvalReport) -> pd.DataFrame:
    rows = [
        {"actual_bin_m": a * report.histogram_bin_m, "predicted_bin_m": p * report.histogram_bin_m, "count": c}
        for (a, p), c in sorted(report.histogram.items())
    ]
    return pd.DataFrame(rows, columns=["actual_bin_m", "predicted_bin_m", "count"])


def export_histogram(report: EvalReport, path: Union[str, Path], *, lock_timeout_s: float = 30.0) -> Path:
    """Write the 2-D (actual, predicted) bin counts as CSV; bins are labelled by their lower edge in meters."""
    text = histogram_frame(report).to_csv(index=False, float_format="%.17g", lineterminator="\n")
    return atomic_write_text(path, text, lock_timeout_s=lock_timeout_s)
