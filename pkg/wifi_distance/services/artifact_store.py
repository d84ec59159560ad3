from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Any, Dict, Generator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import portalocker
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from wifi_distance.errors import DataError
from wifi_distance.fingerprints import MIN_SHARED_MACS, PairRecord
from wifi_distance.learners.base import TrainedModel
from wifi_distance.learners.registry import fitted_from_dict
from wifi_distance.selection.masks import FeatureMask
from wifi_distance.signal_metrics import FEATURE_NAMES

logger = logging.getLogger(__name__)

MODEL_SCHEMA = "wifi-distance-model"
MODEL_SCHEMA_VERSION = 1

PAIR_ID_COLUMNS = ["dataset_id", "fp_a_id", "fp_b_id"]
PAIR_COLUMNS = PAIR_ID_COLUMNS + list(FEATURE_NAMES) + ["label_m"]

PathLike = Union[str, Path]

_INTERSECT = FEATURE_NAMES.index("intersect_count")
_UNION = FEATURE_NAMES.index("union_count")

NonNegativeFinite = Annotated[float, Field(ge=0, allow_inf_nan=False)]


class PairRow(BaseModel):
    """One imported pair row; feature values and MAC counts must be ones pair generation can emit."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    features: Tuple[NonNegativeFinite, ...] = Field(min_length=len(FEATURE_NAMES), max_length=len(FEATURE_NAMES))
    label_m: NonNegativeFinite

    @model_validator(mode="after")
    def _mac_counts(self):
        inter, union = self.features[_INTERSECT], self.features[_UNION]
        if not (inter.is_integer() and union.is_integer()):
            raise ValueError(f"MAC counts must be integers, got {inter:g} and {union:g}")
        if inter < MIN_SHARED_MACS:
            raise ValueError(f"intersect_count {inter:g} is below {MIN_SHARED_MACS}")
        if union < inter:
            raise ValueError(f"union_count {union:g} is smaller than intersect_count {inter:g}")
        return self


def _pair_row_error(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(x) for x in err['loc']) or 'row'}: {err['msg']}" for err in e.errors())


class ParseError(DataError):
    """A row or file could not be parsed; ``line`` is 1-based and counts the header."""

    def __init__(self, path: PathLike, message: str, line: Optional[int] = None):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


class VersionMismatch(DataError):
    pass


class CorruptModel(DataError):
    pass


@contextmanager
def _file_lock(path: Path, timeout: float) -> Generator[None, None, None]:
    lock_path = path.with_suffix(path.suffix + ".lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    with portalocker.Lock(str(lock_path), timeout=timeout):
        yield


def atomic_write_text(path: PathLike, text: str, *, lock_timeout_s: float = 30.0) -> Path:
    """Write text under a lock file with temp + fsync + os.replace so readers never see a partial file."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with _file_lock(target, lock_timeout_s):
        fd, tmp_path = tempfile.mkstemp(prefix=target.name + ".", suffix=".tmp", dir=str(target.parent))
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as tmpf:
                tmpf.write(text)
                tmpf.flush()
                os.fsync(tmpf.fileno())
            os.replace(tmp_path, target)
        finally:
            try:
                if os.path.exists(tmp_path):
                    os.remove(tmp_path)
            except Exception:
                pass
    logger.debug("Wrote %s (%s bytes)", target, len(text))
    return target


def frame_to_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def write_frame(path: PathLike, df: pd.DataFrame, *, lock_timeout_s: float = 30.0) -> Path:
    return atomic_write_text(path, frame_to_csv(df), lock_timeout_s=lock_timeout_s)


def write_json(path: PathLike, payload: Any, *, lock_timeout_s: float = 30.0) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, allow_nan=False) + "\n", lock_timeout_s=lock_timeout_s)


def read_json(path: PathLike) -> Any:
    p = Path(path)
    if not p.exists():
        raise DataError(f"File not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(p, f"invalid JSON ({e.msg})", e.lineno) from e


# ----------------------------
# Pair files
# ----------------------------
def pairs_frame(pairs: Sequence[PairRecord]) -> pd.DataFrame:
    rows = [[p.dataset_id, p.fp_a_id, p.fp_b_id, *p.features, p.label_m] for p in pairs]
    return pd.DataFrame(rows, columns=PAIR_COLUMNS)


def export_pairs(pairs: Sequence[PairRecord], path: PathLike, *, lock_timeout_s: float = 30.0) -> Path:
    """Write pairs as CSV with full-precision floats; an empty list yields a header-only file."""
    out = write_frame(path, pairs_frame(pairs), lock_timeout_s=lock_timeout_s)
    logger.info("Exported %s pairs to %s", len(pairs), out)
    return out


def read_table(path: Path, id_columns: Sequence[str]) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"File not found: {path}")
    try:
        return pd.read_csv(
            path,
            dtype={c: str for c in id_columns},
            keep_default_na=False,
            float_precision="round_trip",
        )
    except pd.errors.EmptyDataError as e:
        raise ParseError(path, "file is empty (missing header)") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(path, str(e)) from e


def _numeric_column(df: pd.DataFrame, col: str, path: Path) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    bad = values.isna()
    if bad.any():
        idx = int(np.argmax(bad.to_numpy()))
        raise ParseError(path, f"non-numeric value {df[col].iloc[idx]!r} in column '{col}'", idx + 2)
    return values.to_numpy(dtype=float)


def import_pairs(path: PathLike) -> List[PairRecord]:
    p = Path(path)
    df = read_table(p, PAIR_ID_COLUMNS)
    missing = [c for c in PAIR_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(p, f"missing columns: {missing}", 1)
    if df.empty:
        return []
    numeric = {c: _numeric_column(df, c, p) for c in list(FEATURE_NAMES) + ["label_m"]}
    features = np.column_stack([numeric[c] for c in FEATURE_NAMES])
    out: List[PairRecord] = []
    for i, (ds, a, b) in enumerate(zip(df["dataset_id"], df["fp_a_id"], df["fp_b_id"])):
        try:
            row = PairRow(features=tuple(features[i]), label_m=numeric["label_m"][i])
        except ValidationError as e:
            raise ParseError(p, _pair_row_error(e), i + 2) from e
        try:
            out.append(PairRecord(fp_a_id=a, fp_b_id=b, dataset_id=ds, features=row.features, label_m=row.label_m))
        except ValueError as e:
            raise ParseError(p, str(e), i + 2) from e
    logger.info("Imported %s pairs from %s", len(out), p)
    return out


def write_mask(path: PathLike, mask: FeatureMask, *, lock_timeout_s: float = 30.0) -> Path:
    return atomic_write_text(path, mask.to_string() + "\n", lock_timeout_s=lock_timeout_s)


def read_mask(path: PathLike) -> FeatureMask:
    p = Path(path)
    if not p.exists():
        raise DataError(f"Mask file not found: {p}")
    try:
        return FeatureMask.read(p).require_non_empty()
    except ValueError as e:
        raise ParseError(p, str(e), 1) from e


# ----------------------------
# Model files
# ----------------------------
def _finite_or_none(x: float) -> Optional[float]:
    return None if math.isinf(x) else float(x)


def _mask_from_bits(bits: str) -> FeatureMask:
    if not bits or set(bits) - {"0", "1"}:
        raise ValueError(f"invalid feature mask {bits!r}")
    return FeatureMask(tuple(c == "1" for c in bits))


def model_to_dict(model: TrainedModel) -> Dict[str, Any]:
    return {
        "schema": MODEL_SCHEMA,
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind,
        "feature_mask": model.feature_mask.to_string(),
        "feature_names": list(model.feature_mask.names),
        "hyperparameters": dict(model.hyperparameters),
        # null means no training filter (+inf)
        "train_filter_m": _finite_or_none(model.train_filter_m),
        "train_time_s": float(model.train_time_s),
        "flags": dict(model.flags),
        "fitted": model.fitted.to_dict(),
    }


def model_from_dict(doc: Mapping[str, Any], *, source: str = "<memory>") -> TrainedModel:
    if not isinstance(doc, Mapping) or doc.get("schema") != MODEL_SCHEMA:
        raise CorruptModel(f"{source}: not a {MODEL_SCHEMA} document")
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise VersionMismatch(f"{source}: schema_version {version!r}, expected {MODEL_SCHEMA_VERSION}")
    try:
        kind = str(doc["kind"])
        limit = doc.get("train_filter_m")
        return TrainedModel(
            kind=kind,
            feature_mask=_mask_from_bits(str(doc["feature_mask"])),
            hyperparameters=dict(doc.get("hyperparameters") or {}),
            fitted=fitted_from_dict(kind, doc["fitted"]),
            train_filter_m=math.inf if limit is None else float(limit),
            train_time_s=float(doc.get("train_time_s", 0.0)),
            flags={k: bool(v) for k, v in (doc.get("flags") or {}).items()},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptModel(f"{source}: {e}") from e


def save_model(model: TrainedModel, path: PathLike, *, lock_timeout_s: float = 30.0) -> Path:
    out = write_json(path, model_to_dict(model), lock_timeout_s=lock_timeout_s)
    logger.info("Saved %s model to %s", model.kind, out)
    return out


def load_model(path: PathLike) -> TrainedModel:
    p = Path(path)
    if not p.exists():
        raise DataError(f"Model file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptModel(f"{p}: unreadable model file ({e})") from e
    return model_from_dict(doc, source=str(p))


class ArtifactStore:
    """Stage artifacts rooted at one output directory, all written atomically."""

    def __init__(self, root: PathLike, *, lock_timeout_s: float = 30.0) -> None:
        self.root = Path(root)
        self.lock_timeout_s = lock_timeout_s

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, text: str) -> Path:
        return atomic_write_text(self.path(name), text, lock_timeout_s=self.lock_timeout_s)

    def write_json(self, name: str, payload: Any) -> Path:
        return write_json(self.path(name), payload, lock_timeout_s=self.lock_timeout_s)

    def write_frame(self, name: str, df: pd.DataFrame) -> Path:
        return write_frame(self.path(name), df, lock_timeout_s=self.lock_timeout_s)

    def export_pairs(self, name: str, pairs: Sequence[PairRecord]) -> Path:
        return export_pairs(pairs, self.path(name), lock_timeout_s=self.lock_timeout_s)

    def save_model(self, name: str, model: TrainedModel) -> Path:
        return save_model(model, self.path(name), lock_timeout_s=self.lock_timeout_s)

    def write_mask(self, name: str, mask: FeatureMask) -> Path:
        return write_mask(self.path(name), mask, lock_timeout_s=self.lock_timeout_s)
