"""Signal-space distance functions evaluated between two fingerprints.

Twelve dissimilarities are computed on the RSSI readings of the MACs both
fingerprints observed (aligned by lexicographic MAC order); Jaccard and the two
MAC-count features use the full MAC sets.  Together they form the 14-column
feature vector every learner consumes, in FEATURE_NAMES order.

The kernels are scipy.spatial.distance; the wrappers here only settle the
cases scipy leaves undefined (0/0 Bray-Curtis, zero-norm cosine/correlation).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, AbstractSet, Callable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import distance

if TYPE_CHECKING:  # pragma: no cover
    from wifi_distance.fingerprints import Fingerprint


FEATURE_NAMES: Tuple[str, ...] = (
    "braycurtis",
    "canberra",
    "chebyshev",
    "cityblock",
    "correlation",
    "cosine",
    "euclidean",
    "jaccard",
    "jensenshannon",
    "minkowski",
    "sqeuclidean",
    "wminkowski",
    "intersect_count",
    "union_count",
)
N_FEATURES = len(FEATURE_NAMES)

# Shift for the default clip floor of -95 dBm; other floors use js_shift_for().
JS_SHIFT_DB = 96.0


class DegenerateVector(ValueError):
    """A (centred) vector has zero norm; correlation/cosine is undefined."""


def js_shift_for(rssi_min_dbm: float) -> float:
    """Shift that lifts the lowest accepted reading to 1 before normalisation."""
    return 1.0 - float(rssi_min_dbm)


@dataclass(frozen=True)
class MetricParams:
    p: float = 3.0
    wminkowski_p: float = 3.0
    # Uniform weight or per-MAC weights; MACs missing from the map weigh 1.0.
    w: Union[float, Mapping[str, float]] = 1.0
    js_shift_db: float = JS_SHIFT_DB

    def __post_init__(self) -> None:
        if self.p < 1 or self.wminkowski_p < 1:
            raise ValueError("Minkowski order p must be >= 1")

    def weights_for(self, macs: Sequence[str]) -> np.ndarray:
        if isinstance(self.w, Mapping):
            return np.array([float(self.w.get(m, 1.0)) for m in macs], dtype=float)
        return np.full(len(macs), float(self.w), dtype=float)


def _pair(u, v) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"u and v must be 1-D arrays of equal length, got {a.shape} and {b.shape}")
    return a, b


def braycurtis(u, v) -> float:
    a, b = _pair(u, v)
    if not np.any(a + b):
        return 0.0
    return float(distance.braycurtis(a, b))


def canberra(u, v) -> float:
    # scipy drops 0/0 terms
    a, b = _pair(u, v)
    return float(distance.canberra(a, b))


def chebyshev(u, v) -> float:
    a, b = _pair(u, v)
    return float(distance.chebyshev(a, b)) if a.size else 0.0


def cityblock(u, v) -> float:
    a, b = _pair(u, v)
    return float(distance.cityblock(a, b))


def sqeuclidean(u, v) -> float:
    a, b = _pair(u, v)
    return float(distance.sqeuclidean(a, b))


def euclidean(u, v) -> float:
    a, b = _pair(u, v)
    return float(distance.euclidean(a, b))


def minkowski(u, v, p: float = 3.0) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    a, b = _pair(u, v)
    return float(distance.minkowski(a, b, p))


def wminkowski(u, v, p: float = 3.0, w=None) -> float:
    """Minkowski distance between w*u and w*v."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a, b = _pair(u, v)
    if w is None:
        return float(distance.minkowski(a, b, p))
    if np.ndim(w) and np.size(w) != a.size:
        raise ValueError(f"weight vector length {np.size(w)} != vector length {a.size}")
    weights = np.broadcast_to(np.asarray(w, dtype=float), a.shape)
    if np.any(weights <= 0):
        raise ValueError("weights must be > 0")
    # scipy weights |u_i - v_i|^p, hence w^p
    return float(distance.minkowski(a, b, p, w=weights ** p))


def _checked(kernel: Callable[[np.ndarray, np.ndarray], float], centred: bool):
    def run(a: np.ndarray, b: np.ndarray) -> float:
        ca, cb = (a - a.mean(), b - b.mean()) if centred else (a, b)
        if not np.any(ca) or not np.any(cb):
            raise DegenerateVector("zero-norm vector")
        return min(2.0, max(0.0, float(kernel(a, b))))

    return run


def _resolve_degenerate(a: np.ndarray, b: np.ndarray, kernel) -> float:
    if np.array_equal(a, b):
        return 0.0
    try:
        return kernel(a, b)
    except DegenerateVector:
        return 1.0


def cosine(u, v) -> float:
    a, b = _pair(u, v)
    return _resolve_degenerate(a, b, _checked(distance.cosine, centred=False))


def correlation(u, v) -> float:
    a, b = _pair(u, v)
    return _resolve_degenerate(a, b, _checked(distance.correlation, centred=True))


def js_distance(p, q) -> float:
    """Jensen-Shannon distance between two probability vectors (natural log)."""
    a, b = _pair(p, q)
    return float(distance.jensenshannon(a, b))


def rssi_distribution(u, shift_db: float = JS_SHIFT_DB) -> np.ndarray:
    shifted = np.asarray(u, dtype=float) + shift_db
    if np.any(shifted <= 0):
        raise ValueError(f"RSSI at or below -{shift_db:g} dBm; clip readings or raise the shift")
    return shifted / shifted.sum()


def jensen_shannon(u, v, shift_db: float = JS_SHIFT_DB) -> float:
    a, b = _pair(u, v)
    return js_distance(rssi_distribution(a, shift_db), rssi_distribution(b, shift_db))


def jaccard_mac(macs_a: AbstractSet[str], macs_b: AbstractSet[str]) -> float:
    """Jaccard distance (1 - |A∩B| / |A∪B|) between two MAC sets."""
    if not macs_a or not macs_b:
        raise ValueError("MAC sets must be non-empty")
    inter = len(macs_a & macs_b)
    union = len(macs_a) + len(macs_b) - inter
    return 1.0 - inter / union


def count_features(macs_a: AbstractSet[str], macs_b: AbstractSet[str]) -> Tuple[int, int]:
    inter = len(macs_a & macs_b)
    return inter, len(macs_a) + len(macs_b) - inter


def aligned_vectors(a: "Fingerprint", b: "Fingerprint") -> Tuple[Tuple[str, ...], np.ndarray, np.ndarray]:
    macs = tuple(sorted(a.macs & b.macs))
    u = np.array([a.readings[m] for m in macs], dtype=float)
    v = np.array([b.readings[m] for m in macs], dtype=float)
    return macs, u, v


def extract_features(a: "Fingerprint", b: "Fingerprint", params: Optional[MetricParams] = None) -> np.ndarray:
    """Return the 14-feature vector for an eligible fingerprint pair."""
    params = params or MetricParams()
    macs, u, v = aligned_vectors(a, b)
    if len(macs) < 2:
        raise ValueError(f"pair ({a.id}, {b.id}) shares {len(macs)} MACs; at least 2 are required")
    inter, union = count_features(a.macs, b.macs)
    return np.array(
        [
            braycurtis(u, v),
            canberra(u, v),
            chebyshev(u, v),
            cityblock(u, v),
            correlation(u, v),
            cosine(u, v),
            euclidean(u, v),
            jaccard_mac(a.macs, b.macs),
            jensen_shannon(u, v, params.js_shift_db),
            minkowski(u, v, params.p),
            sqeuclidean(u, v),
            wminkowski(u, v, params.wminkowski_p, params.weights_for(macs)),
            float(inter),
            float(union),
        ],
        dtype=float,
    )
