"""Synthetic venues built from a log-distance path-loss model with Gaussian shadowing.

RSSI(ap, x) = P0 - 10 * n_pl * log10(max(d, d0) / d0) + S_ap(x) + N(0, fading^2)

S_ap is a zero-mean Gaussian field with standard deviation sigma and squared-
exponential correlation over shadowing_correlation_m, so two scans a few meters
apart see nearly the same shadowing from each AP while distant scans see
independent draws. With shadowing_correlation_m = 0 the shadowing is drawn
independently per scan. Readings outside [sensitivity_dbm, saturation_dbm] are
dropped, the same way clipping treats real scans. A fingerprint left with no
readings is skipped.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from wifi_distance.core.config import VenueSpec
from wifi_distance.fingerprints import Fingerprint, PairRecord
from wifi_distance.signal_metrics import FEATURE_NAMES, N_FEATURES

logger = logging.getLogger(__name__)

SHADOWING_COMPONENTS = 96


def path_loss_rssi(distance_m, tx_power_dbm: float = -30.0, path_loss_exponent: float = 3.0, reference_distance_m: float = 1.0):
    """Noise-free received power in dBm; distances below the reference distance read P0."""
    d = np.maximum(np.asarray(distance_m, dtype=float), reference_distance_m)
    out = tx_power_dbm - 10.0 * path_loss_exponent * np.log10(d / reference_distance_m)
    return float(out) if np.ndim(out) == 0 else out


def ap_mac(prefix: int, index: int) -> str:
    # 02: locally administered unicast
    return f"02:{(prefix >> 8) & 0xFF:02x}:{prefix & 0xFF:02x}:00:{(index >> 8) & 0xFF:02x}:{index & 0xFF:02x}"


def access_points(spec: VenueSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.ap_positions is not None:
        return np.array(spec.ap_positions, dtype=float)
    n = spec.ap_count
    if spec.ap_layout == "random":
        return np.column_stack([rng.uniform(0, spec.width_m, n), rng.uniform(0, spec.height_m, n)])
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    pts = [
        ((c + 0.5) * spec.width_m / cols, (r + 0.5) * spec.height_m / rows)
        for r in range(rows)
        for c in range(cols)
    ]
    return np.array(pts[:n], dtype=float)


@dataclass(frozen=True)
class ShadowingField:
    """Per-AP spatially correlated shadowing, as a sum of random cosine components.

    omega ~ N(0, I / corr_m^2) and phase ~ U(0, 2*pi) approximate a Gaussian
    field with covariance sigma^2 * exp(-|dx|^2 / (2 * corr_m^2)).
    """

    sigma_dbm: float
    omega: np.ndarray  # (aps, components, 2)
    phase: np.ndarray  # (aps, components)

    @classmethod
    def draw(
        cls,
        n_aps: int,
        sigma_dbm: float,
        correlation_m: float,
        rng: np.random.Generator,
        components: int = SHADOWING_COMPONENTS,
    ) -> "ShadowingField":
        if correlation_m <= 0:
            raise ValueError("correlation_m must be > 0")
        omega = rng.normal(0.0, 1.0 / correlation_m, size=(n_aps, components, 2))
        phase = rng.uniform(0.0, 2.0 * math.pi, size=(n_aps, components))
        return cls(sigma_dbm=float(sigma_dbm), omega=omega, phase=phase)

    def at(self, x: float, y: float) -> np.ndarray:
        """Shadowing in dB from every AP at (x, y)."""
        arg = self.omega[..., 0] * x + self.omega[..., 1] * y + self.phase
        m = self.phase.shape[1]
        return self.sigma_dbm * math.sqrt(2.0 / m) * np.cos(arg).sum(axis=1)


def _scan(
    spec: VenueSpec,
    aps: np.ndarray,
    macs: Sequence[str],
    rng: np.random.Generator,
    field: Optional[ShadowingField] = None,
) -> Tuple[float, float, dict]:
    x = float(rng.uniform(0, spec.width_m))
    y = float(rng.uniform(0, spec.height_m))
    d = np.hypot(aps[:, 0] - x, aps[:, 1] - y)
    rssi = path_loss_rssi(d, spec.tx_power_dbm, spec.path_loss_exponent, spec.reference_distance_m)
    if field is not None:
        rssi = rssi + field.at(x, y)
    elif spec.shadowing_sigma_dbm > 0:
        rssi = rssi + rng.normal(0.0, spec.shadowing_sigma_dbm, size=d.shape[0])
    if spec.fading_sigma_dbm > 0:
        rssi = rssi + rng.normal(0.0, spec.fading_sigma_dbm, size=d.shape[0])
    keep = (rssi >= spec.sensitivity_dbm) & (rssi <= spec.saturation_dbm)
    return x, y, {macs[i]: float(rssi[i]) for i in np.nonzero(keep)[0]}


def generate_venue(spec: VenueSpec) -> List[Fingerprint]:
    """Deterministic per seed: AP placement, the shadowing field and every scan draw from their own SeedSequence child."""
    ap_seq, fp_seq, field_seq = np.random.SeedSequence(spec.seed).spawn(3)
    aps = access_points(spec, np.random.default_rng(ap_seq))
    macs = [ap_mac(spec.mac_prefix, i) for i in range(aps.shape[0])]
    field = None
    if spec.shadowing_sigma_dbm > 0 and spec.shadowing_correlation_m > 0:
        field = ShadowingField.draw(
            aps.shape[0], spec.shadowing_sigma_dbm, spec.shadowing_correlation_m, np.random.default_rng(field_seq)
        )
    out: List[Fingerprint] = []
    skipped = 0
    width = max(4, len(str(spec.fingerprint_count - 1)))
    for i, child in enumerate(fp_seq.spawn(spec.fingerprint_count)):
        x, y, readings = _scan(spec, aps, macs, np.random.default_rng(child), field)
        if not readings:
            skipped += 1
            continue
        out.append(
            Fingerprint(
                id=f"fp{i:0{width}d}",
                dataset_id=spec.dataset_id,
                x_m=x,
                y_m=y,
                floor=spec.floor,
                readings=readings,
            )
        )
    if skipped:
        logger.warning("Venue %s: %s fingerprints heard no AP and were skipped", spec.dataset_id, skipped)
    logger.info("Generated venue %s: %s fingerprints, %s APs", spec.dataset_id, len(out), aps.shape[0])
    return out


def generate_venues(specs: Iterable[VenueSpec]) -> List[Fingerprint]:
    """Several venues in one list; dataset ids and MAC prefixes must be distinct so venues share no AP."""
    specs = list(specs)
    ids = [s.dataset_id for s in specs]
    prefixes = [s.mac_prefix for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"venue dataset ids must be unique: {ids}")
    if len(set(prefixes)) != len(prefixes):
        raise ValueError(f"venue mac_prefix values must be unique: {prefixes}")
    out: List[Fingerprint] = []
    for s in specs:
        out.extend(generate_venue(s))
    return out


def planted_feature_pairs(
    n: int,
    seed: int = 0,
    *,
    noise_sd: float = 1.0,
    max_label_m: float = 30.0,
) -> Tuple[List[PairRecord], Tuple[int, ...]]:
    """Pairs whose label is the sum of two known feature columns plus noise.

    Two distance columns, chosen by the seed, hold independent parts
    a, b ~ U(0, max_label_m / 2) and label = |a + b + N(0, noise_sd^2)|, so
    either column alone explains about half of the label variance. The other
    distance columns are U(0, max_label_m) noise; the count columns are
    label-free integers with 2 <= intersect_count <= union_count. Returns the
    pairs and the two informative column indices in ascending order.
    """
    if n < 100:
        raise ValueError("planted_feature_pairs needs n >= 100")
    rng = np.random.default_rng(seed)
    inter_j = FEATURE_NAMES.index("intersect_count")
    union_j = FEATURE_NAMES.index("union_count")
    distance_cols = [j for j in range(N_FEATURES) if j not in (inter_j, union_j)]
    informative = tuple(sorted(int(i) for i in rng.choice(distance_cols, size=2, replace=False)))
    X = rng.uniform(0.0, max_label_m, (n, N_FEATURES))
    parts = rng.uniform(0.0, max_label_m / 2.0, (n, 2))
    X[:, informative[0]] = parts[:, 0]
    X[:, informative[1]] = parts[:, 1]
    label = np.abs(parts.sum(axis=1) + rng.normal(0.0, noise_sd, n))
    inter = rng.integers(2, 13, n)
    X[:, inter_j] = inter
    X[:, union_j] = inter + rng.integers(0, 13, n)
    width = len(str(n - 1))
    pairs = [
        PairRecord(
            fp_a_id=f"a{i:0{width}d}",
            fp_b_id=f"b{i:0{width}d}",
            dataset_id="planted",
            features=tuple(X[i]),
            label_m=float(label[i]),
        )
        for i in range(n)
    ]
    return pairs, informative
