from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import FrozenSet, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from wifi_distance.core.config import PipelineConfig
from wifi_distance.errors import DataError
from wifi_distance.signal_metrics import FEATURE_NAMES, N_FEATURES, MetricParams, extract_features, js_shift_for

logger = logging.getLogger(__name__)

MIN_SHARED_MACS = 2


class EmptyAfterClip(DataError):
    """Every reading of a fingerprint fell outside the RSSI window."""

    def __init__(self, fingerprint_id: str):
        self.fingerprint_id = fingerprint_id
        super().__init__(f"Fingerprint '{fingerprint_id}' has no readings left after clipping")


@dataclass(frozen=True, slots=True)
class Fingerprint:
    """One WiFi scan at a known position."""

    id: str
    dataset_id: str
    x_m: float
    y_m: float
    floor: int
    readings: Mapping[str, float]
    macs: FrozenSet[str] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.readings:
            raise ValueError(f"Fingerprint '{self.id}' has no readings")
        frozen = MappingProxyType({str(k): float(v) for k, v in self.readings.items()})
        object.__setattr__(self, "readings", frozen)
        object.__setattr__(self, "macs", frozenset(frozen))


@dataclass(frozen=True, slots=True)
class PairRecord:
    """An eligible fingerprint pair with its 14 features and spatial-distance label."""

    fp_a_id: str
    fp_b_id: str
    dataset_id: str
    features: Tuple[float, ...]
    label_m: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(float(x) for x in self.features))
        if len(self.features) != N_FEATURES:
            raise ValueError(f"PairRecord needs {N_FEATURES} features, got {len(self.features)}")
        if not (self.label_m >= 0):
            raise ValueError(f"label_m must be >= 0, got {self.label_m}")

    @property
    def pair_id(self) -> str:
        return f"{self.dataset_id}:{self.fp_a_id}|{self.fp_b_id}"


@dataclass(frozen=True)
class PairTable:
    """Column view of a pair list: feature matrix, labels and the feature names kept."""

    X: np.ndarray
    y: np.ndarray
    pair_ids: Tuple[str, ...]
    dataset_ids: Tuple[str, ...]
    feature_names: Tuple[str, ...] = FEATURE_NAMES

    @classmethod
    def from_pairs(cls, pairs: Sequence[PairRecord]) -> "PairTable":
        if pairs:
            X = np.array([p.features for p in pairs], dtype=float)
        else:
            X = np.empty((0, N_FEATURES), dtype=float)
        y = np.array([p.label_m for p in pairs], dtype=float)
        return cls(
            X=X,
            y=y,
            pair_ids=tuple(p.pair_id for p in pairs),
            dataset_ids=tuple(p.dataset_id for p in pairs),
        )

    def __len__(self) -> int:
        return int(self.y.shape[0])


def metric_params(cfg: PipelineConfig) -> MetricParams:
    return MetricParams(
        p=cfg.minkowski_p,
        wminkowski_p=cfg.wminkowski_p,
        w=cfg.wminkowski_weights,
        js_shift_db=js_shift_for(cfg.rssi_min_dbm),
    )


def clip_fingerprint(fp: Fingerprint, cfg: PipelineConfig) -> Fingerprint:
    """Drop readings outside [rssi_min_dbm, rssi_max_dbm]; out-of-range values are never saturated."""
    kept = {m: r for m, r in fp.readings.items() if cfg.rssi_min_dbm <= r <= cfg.rssi_max_dbm}
    if not kept:
        raise EmptyAfterClip(fp.id)
    if len(kept) == len(fp.readings):
        return fp
    return replace(fp, readings=kept)


def pair_eligible(a: Fingerprint, b: Fingerprint, cfg: PipelineConfig) -> bool:
    if a.dataset_id != b.dataset_id:
        return False
    if cfg.same_floor_only and a.floor != b.floor:
        return False
    return len(a.macs & b.macs) >= MIN_SHARED_MACS


def label_distance(a: Fingerprint, b: Fingerprint) -> float:
    """Planar Euclidean distance in meters between the two scan positions."""
    return math.hypot(a.x_m - b.x_m, a.y_m - b.y_m)


def _pairs_for_rows(
    rows: Sequence[int],
    dataset: Sequence[Fingerprint],
    cfg: PipelineConfig,
    params: MetricParams,
) -> List[PairRecord]:
    out: List[PairRecord] = []
    n = len(dataset)
    for i in rows:
        a = dataset[i]
        for j in range(i + 1, n):
            b = dataset[j]
            if not pair_eligible(a, b, cfg):
                continue
            out.append(
                PairRecord(
                    fp_a_id=a.id,
                    fp_b_id=b.id,
                    dataset_id=a.dataset_id,
                    features=tuple(extract_features(a, b, params)),
                    label_m=label_distance(a, b),
                )
            )
    return out


def generate_pairs(dataset: Sequence[Fingerprint], cfg: PipelineConfig, *, workers: int = 1) -> List[PairRecord]:
    """Emit one PairRecord per unordered eligible pair, ordered by (i, j) input position.

    With workers > 1 the outer index is split into contiguous chunks whose
    results are concatenated in chunk order, so output does not depend on the
    worker count.
    """
    params = metric_params(cfg)
    n = len(dataset)
    if n < 2:
        return []
    workers = max(1, int(workers))
    if workers == 1:
        pairs = _pairs_for_rows(range(n), dataset, cfg, params)
    else:
        # Row i owns n-1-i candidates; chunk boundaries balance the triangle.
        bounds = [0]
        total = n * (n - 1) / 2
        acc = 0.0
        for i in range(n):
            acc += n - 1 - i
            if acc >= total * len(bounds) / workers and len(bounds) < workers:
                bounds.append(i + 1)
        bounds.append(n)
        chunks = [range(bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1) if bounds[k] < bounds[k + 1]]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda rows: _pairs_for_rows(rows, dataset, cfg, params), chunks))
        pairs = [p for part in parts for p in part]
    logger.info("Generated %s eligible pairs from %s fingerprints", len(pairs), n)
    return pairs


def generate_pairs_by_dataset(
    fingerprints: Iterable[Fingerprint], cfg: PipelineConfig, *, workers: int = 1
) -> List[PairRecord]:
    """Pair generation restricted to within-dataset pairs, dataset by dataset in first-seen order."""
    groups: dict[str, List[Fingerprint]] = {}
    for fp in fingerprints:
        groups.setdefault(fp.dataset_id, []).append(fp)
    out: List[PairRecord] = []
    for dataset_id, fps in groups.items():
        logger.debug("Pairing dataset %s (%s fingerprints)", dataset_id, len(fps))
        out.extend(generate_pairs(fps, cfg, workers=workers))
    return out


def filter_by_label(pairs: Sequence[PairRecord], max_m: float) -> List[PairRecord]:
    """Keep pairs whose label is <= max_m (inclusive), preserving order."""
    if not max_m > 0:
        raise ValueError("max_m must be > 0")
    return [p for p in pairs if p.label_m <= max_m]


def clip_all(fingerprints: Iterable[Fingerprint], cfg: PipelineConfig) -> Tuple[List[Fingerprint], int, List[str]]:
    """Clip every fingerprint; returns (kept, dropped reading count, ids of dropped fingerprints)."""
    kept: List[Fingerprint] = []
    dropped_readings = 0
    dropped_fps: List[str] = []
    for fp in fingerprints:
        try:
            clipped = clip_fingerprint(fp, cfg)
        except EmptyAfterClip:
            dropped_readings += len(fp.readings)
            dropped_fps.append(fp.id)
            continue
        dropped_readings += len(fp.readings) - len(clipped.readings)
        kept.append(clipped)
    if dropped_readings:
        logger.warning("Clipping dropped %s out-of-range readings", dropped_readings)
    if dropped_fps:
        logger.warning("Dropped %s fingerprints with no in-range readings", len(dropped_fps))
    return kept, dropped_readings, dropped_fps
