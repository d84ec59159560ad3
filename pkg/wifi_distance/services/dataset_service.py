from __future__ import annotations

import hashlib
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from wifi_distance.core.config import PipelineConfig
from wifi_distance.errors import ConfigError, DataError, InvariantError
from wifi_distance.fingerprints import Fingerprint, PairRecord, clip_all
from wifi_distance.services.artifact_store import ParseError, read_table, read_json, write_frame, write_json

logger = logging.getLogger(__name__)

FINGERPRINT_COLUMNS = ["dataset_id", "fingerprint_id", "x_m", "y_m", "floor", "mac", "rssi_dbm"]
SPLIT_NAMES = ("train", "validation", "test")
FORMATS = ("long-csv",)

_MAC48 = re.compile(r"^[0-9A-Fa-f]{2}([:-]?)[0-9A-Fa-f]{2}(?:\1[0-9A-Fa-f]{2}){4}$")
# Several public datasets publish anonymised AP identifiers instead of MAC-48 addresses.
_ANON_ID = re.compile(r"^[A-Za-z][A-Za-z0-9_.-]{0,63}$")


class EmptyDataset(DataError):
    pass


class IsolationViolation(DataError):
    """A pair from an isolated dataset was about to enter the pool split."""


def normalize_mac(raw: str) -> str:
    """Canonical lower-case colon form for MAC-48; anonymised ids pass through unchanged."""
    s = str(raw).strip()
    if _MAC48.match(s):
        hexdigits = re.sub(r"[:-]", "", s).lower()
        return ":".join(hexdigits[i:i + 2] for i in range(0, 12, 2))
    if _ANON_ID.match(s):
        return s
    raise ValueError(f"invalid MAC address {raw!r}")


@dataclass
class IngestStats:
    rows: int = 0
    fingerprints_read: int = 0
    readings_dropped: int = 0
    fingerprints_dropped: List[str] = field(default_factory=list)


def _numeric(df: pd.DataFrame, col: str, path: Path, *, integer: bool = False) -> np.ndarray:
    # float() per cell keeps %.17g text exact on the way back in
    out = np.empty(len(df), dtype=float)
    for idx, raw in enumerate(df[col]):
        try:
            value = float(raw)
        except ValueError:
            value = math.nan
        if not math.isfinite(value) or (integer and not value.is_integer()):
            kind = "integer" if integer else "numeric"
            raise ParseError(path, f"non-{kind} value {raw!r} in column '{col}'", idx + 2)
        out[idx] = value
    return out


def read_fingerprints(
    path: Union[str, Path],
    cfg: PipelineConfig,
    *,
    dataset_id: Optional[str] = None,
) -> Tuple[List[Fingerprint], IngestStats]:
    """Parse a long-format fingerprint CSV and clip it.

    One row per (fingerprint, MAC) reading. Rows are grouped by
    (dataset_id, fingerprint_id) in first-seen order; ``dataset_id``, when
    given, overrides the column. Line numbers in errors count the header as 1.
    """
    p = Path(path)
    df = read_table(p, FINGERPRINT_COLUMNS)
    missing = [c for c in FINGERPRINT_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(p, f"missing columns: {missing}", 1)
    stats = IngestStats(rows=len(df))
    if df.empty:
        raise EmptyDataset(f"{p}: no readings")

    xs = _numeric(df, "x_m", p)
    ys = _numeric(df, "y_m", p)
    floors = _numeric(df, "floor", p, integer=True).astype(int)
    rssi = _numeric(df, "rssi_dbm", p)

    groups: Dict[Tuple[str, str], dict] = {}
    for i, (ds_raw, fp_raw, mac_raw) in enumerate(zip(df["dataset_id"], df["fingerprint_id"], df["mac"])):
        line = i + 2
        ds = dataset_id or ds_raw.strip()
        fp_id = fp_raw.strip()
        if not ds or not fp_id:
            raise ParseError(p, "empty dataset_id or fingerprint_id", line)
        try:
            mac = normalize_mac(mac_raw)
        except ValueError as e:
            raise ParseError(p, str(e), line) from e
        meta = (float(xs[i]), float(ys[i]), int(floors[i]))
        g = groups.get((ds, fp_id))
        if g is None:
            g = groups[(ds, fp_id)] = {"meta": meta, "readings": {}}
        elif g["meta"] != meta:
            raise ParseError(p, f"fingerprint '{fp_id}' has inconsistent position/floor", line)
        if mac in g["readings"]:
            raise ParseError(p, f"duplicate reading for fingerprint '{fp_id}' and MAC {mac}", line)
        g["readings"][mac] = float(rssi[i])

    raw = [
        Fingerprint(id=fp_id, dataset_id=ds, x_m=g["meta"][0], y_m=g["meta"][1], floor=g["meta"][2], readings=g["readings"])
        for (ds, fp_id), g in groups.items()
    ]
    stats.fingerprints_read = len(raw)
    kept, stats.readings_dropped, stats.fingerprints_dropped = clip_all(raw, cfg)
    if not kept:
        raise EmptyDataset(f"{p}: no fingerprint survives clipping")
    logger.info(
        "Loaded %s fingerprints (%s rows, %s readings dropped) from %s",
        len(kept),
        stats.rows,
        stats.readings_dropped,
        p,
    )
    return kept, stats


def load_fingerprints(
    path: Union[str, Path],
    cfg: Optional[PipelineConfig] = None,
    fmt: str = "long-csv",
    *,
    dataset_id: Optional[str] = None,
) -> List[Fingerprint]:
    if fmt not in FORMATS:
        raise ConfigError(f"Unsupported fingerprint format '{fmt}' (supported: {', '.join(FORMATS)})")
    fps, _ = read_fingerprints(path, cfg or PipelineConfig(), dataset_id=dataset_id)
    return fps


def fingerprints_frame(fingerprints: Iterable[Fingerprint]) -> pd.DataFrame:
    rows = [
        [fp.dataset_id, fp.id, fp.x_m, fp.y_m, fp.floor, mac, r]
        for fp in fingerprints
        for mac, r in fp.readings.items()
    ]
    return pd.DataFrame(rows, columns=FINGERPRINT_COLUMNS)


def write_fingerprints(fingerprints: Sequence[Fingerprint], path: Union[str, Path], *, lock_timeout_s: float = 30.0) -> Path:
    out = write_frame(path, fingerprints_frame(fingerprints), lock_timeout_s=lock_timeout_s)
    logger.info("Wrote %s fingerprints to %s", len(fingerprints), out)
    return out


def file_checksum(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ----------------------------
# Dataset manifest
# ----------------------------
@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    role: str
    source_path: str
    fingerprint_count: int
    checksum: str

    def __post_init__(self) -> None:
        if self.role not in ("pool", "isolated"):
            raise ValueError(f"role must be 'pool' or 'isolated', got {self.role!r}")


def build_manifest(
    fingerprints: Sequence[Fingerprint],
    source_path: Union[str, Path],
    roles: Mapping[str, str],
) -> List[DatasetManifest]:
    """One manifest entry per dataset id found in ``fingerprints``; unlisted datasets go to the pool."""
    checksum = file_checksum(source_path)
    counts: Dict[str, int] = {}
    for fp in fingerprints:
        counts[fp.dataset_id] = counts.get(fp.dataset_id, 0) + 1
    return [
        DatasetManifest(
            dataset_id=ds,
            role=roles.get(ds, "pool"),
            source_path=str(source_path),
            fingerprint_count=n,
            checksum=checksum,
        )
        for ds, n in counts.items()
    ]


def write_manifest(entries: Sequence[DatasetManifest], path: Union[str, Path], *, lock_timeout_s: float = 30.0) -> Path:
    ids = [e.dataset_id for e in entries]
    if len(ids) != len(set(ids)):
        raise DataError(f"duplicate dataset ids in manifest: {ids}")
    return write_json(path, {"datasets": [asdict(e) for e in entries]}, lock_timeout_s=lock_timeout_s)


def read_manifest(path: Union[str, Path]) -> List[DatasetManifest]:
    doc = read_json(path)
    try:
        entries = [DatasetManifest(**e) for e in doc["datasets"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(path, f"invalid manifest: {e}") from e
    ids = [e.dataset_id for e in entries]
    if len(ids) != len(set(ids)):
        raise ParseError(path, "duplicate dataset ids in manifest")
    return entries


def isolated_ids(entries: Iterable[DatasetManifest]) -> frozenset:
    return frozenset(e.dataset_id for e in entries if e.role == "isolated")


# ----------------------------
# Splitting
# ----------------------------
@dataclass(frozen=True)
class SplitAssignment:
    """pair_id -> one of train / validation / test."""

    assignment: Mapping[str, str]

    def __post_init__(self) -> None:
        bad = {s for s in self.assignment.values() if s not in SPLIT_NAMES}
        if bad:
            raise ValueError(f"unknown split names: {sorted(bad)}")

    def counts(self) -> Dict[str, int]:
        out = {name: 0 for name in SPLIT_NAMES}
        for s in self.assignment.values():
            out[s] += 1
        return out

    def subset(self, pairs: Sequence[PairRecord], name: str) -> List[PairRecord]:
        return [p for p in pairs if self.assignment.get(p.pair_id) == name]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"pair_id": list(self.assignment.keys()), "split": list(self.assignment.values())},
            columns=["pair_id", "split"],
        )


def partition_pairs(
    pairs: Sequence[PairRecord], isolated: Iterable[str]
) -> Tuple[List[PairRecord], Dict[str, List[PairRecord]]]:
    """Separate pool pairs from those of isolated datasets (grouped by dataset id)."""
    iso = set(isolated)
    pool: List[PairRecord] = []
    held: Dict[str, List[PairRecord]] = {}
    for p in pairs:
        if p.dataset_id in iso:
            held.setdefault(p.dataset_id, []).append(p)
        else:
            pool.append(p)
    return pool, held


def _split_counts(n: int, fractions: Sequence[float]) -> Tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = min(n - n_train, int(round(fractions[1] * n)))
    return n_train, n_val, n - n_train - n_val


def _check_fractions(fractions: Sequence[float]) -> None:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise ValueError(f"split fractions must be three non-negative values summing to 1, got {tuple(fractions)}")


def _assign(ids: Sequence[str], fractions: Sequence[float], seed: int) -> Dict[str, str]:
    ordered = sorted(ids)
    n_train, n_val, _ = _split_counts(len(ordered), fractions)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    out: Dict[str, str] = {}
    for rank, idx in enumerate(perm):
        if rank < n_train:
            out[ordered[idx]] = "train"
        elif rank < n_train + n_val:
            out[ordered[idx]] = "validation"
        else:
            out[ordered[idx]] = "test"
    return out


def split_pool(
    pairs: Sequence[PairRecord],
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
    *,
    isolated: Iterable[str] = (),
) -> SplitAssignment:
    """Uniform random train/validation/test partition of pool pairs.

    The assignment depends only on the set of pair ids, the fractions and the
    seed (ids are sorted before shuffling).
    """
    _check_fractions(fractions)
    iso = set(isolated)
    leaked = sorted({p.dataset_id for p in pairs if p.dataset_id in iso})
    if leaked:
        raise IsolationViolation(f"pairs from isolated datasets {leaked} cannot enter the pool split")
    ids = [p.pair_id for p in pairs]
    if len(ids) != len(set(ids)):
        raise DataError("duplicate pair ids in pool")
    split = SplitAssignment(_assign(ids, fractions, seed))
    logger.info("Split %s pool pairs: %s", len(ids), split.counts())
    return split


def split_fingerprints(
    pairs: Sequence[PairRecord],
    fractions: Sequence[float] = (0.70, 0.15, 0.15),
    seed: int = 0,
    *,
    isolated: Iterable[str] = (),
) -> Tuple[SplitAssignment, int]:
    """Alternative split over fingerprints instead of pairs.

    Each fingerprint is assigned to one split; a pair is kept only when both of
    its fingerprints landed in the same split. Returns the assignment and the
    number of cross-split pairs discarded.
    """
    _check_fractions(fractions)
    iso = set(isolated)
    leaked = sorted({p.dataset_id for p in pairs if p.dataset_id in iso})
    if leaked:
        raise IsolationViolation(f"pairs from isolated datasets {leaked} cannot enter the pool split")
    fp_keys = sorted({f"{p.dataset_id}:{fid}" for p in pairs for fid in (p.fp_a_id, p.fp_b_id)})
    by_fp = _assign(fp_keys, fractions, seed)
    assignment: Dict[str, str] = {}
    dropped = 0
    for p in pairs:
        sa = by_fp[f"{p.dataset_id}:{p.fp_a_id}"]
        sb = by_fp[f"{p.dataset_id}:{p.fp_b_id}"]
        if sa == sb:
            assignment[p.pair_id] = sa
        else:
            dropped += 1
    if dropped:
        logger.warning("Fingerprint-level split discarded %s cross-split pairs", dropped)
    return SplitAssignment(assignment), dropped


def check_split_parts(parts: Mapping[str, Sequence[PairRecord]], isolated: Iterable[str] = ()) -> None:
    """Raise InvariantError if a pair sits in two parts or an isolated dataset reached one."""
    iso = set(isolated)
    owner: Dict[str, str] = {}
    for name, part in parts.items():
        leaked = sorted({p.dataset_id for p in part if p.dataset_id in iso})
        if leaked:
            raise InvariantError(f"isolated datasets {leaked} found in the {name} split")
        for p in part:
            seen = owner.setdefault(p.pair_id, name)
            if seen != name:
                raise InvariantError(f"pair {p.pair_id} is in both the {seen} and {name} splits")


def write_split(split: SplitAssignment, path: Union[str, Path], *, lock_timeout_s: float = 30.0) -> Path:
    return write_frame(path, split.to_frame(), lock_timeout_s=lock_timeout_s)


def read_split(path: Union[str, Path]) -> SplitAssignment:
    p = Path(path)
    df = read_table(p, ["pair_id", "split"])
    if list(df.columns[:2]) != ["pair_id", "split"]:
        raise ParseError(p, "expected columns pair_id,split", 1)
    try:
        return SplitAssignment(dict(zip(df["pair_id"], df["split"])))
    except ValueError as e:
        raise ParseError(p, str(e)) from e
