from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from wifi_distance.fingerprints import PairRecord, PairTable
from wifi_distance.signal_metrics import FEATURE_NAMES, N_FEATURES


@dataclass(frozen=True)
class FeatureMask:
    """Feature subset as one boolean per column, in FEATURE_NAMES order."""

    bits: Tuple[bool, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @classmethod
    def full(cls, n: int = N_FEATURES) -> "FeatureMask":
        return cls((True,) * n)

    @classmethod
    def from_indices(cls, indices: Iterable[int], n: int = N_FEATURES) -> "FeatureMask":
        chosen = set(int(i) for i in indices)
        if any(i < 0 or i >= n for i in chosen):
            raise ValueError(f"feature index out of range 0..{n - 1}")
        return cls(tuple(i in chosen for i in range(n)))

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "FeatureMask":
        wanted = [n.strip().lower() for n in names if n.strip()]
        unknown = [n for n in wanted if n not in FEATURE_NAMES]
        if unknown:
            raise ValueError(f"unknown feature names: {unknown}")
        return cls.from_indices(FEATURE_NAMES.index(n) for n in wanted)

    @classmethod
    def from_string(cls, text: str) -> "FeatureMask":
        """Parse a bit string ("10110...") or a comma-separated list of feature names."""
        t = text.strip()
        if t and set(t) <= {"0", "1"}:
            if len(t) != N_FEATURES:
                raise ValueError(f"mask bit string must have {N_FEATURES} characters, got {len(t)}")
            return cls(tuple(c == "1" for c in t))
        return cls.from_names(t.split(","))

    @classmethod
    def read(cls, path: Union[str, Path]) -> "FeatureMask":
        return cls.from_string(Path(path).read_text(encoding="utf-8").strip())

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def count(self) -> int:
        return sum(self.bits)

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(FEATURE_NAMES[i] for i in self.indices) if len(self.bits) == N_FEATURES else ()

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)

    def to_string(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def require_non_empty(self) -> "FeatureMask":
        if self.count == 0:
            raise ValueError("feature mask selects no features")
        return self


def apply_mask(pairs: Union[Sequence[PairRecord], PairTable], mask: FeatureMask) -> PairTable:
    """Keep the masked feature columns in canonical order; labels are untouched."""
    mask.require_non_empty()
    table = pairs if isinstance(pairs, PairTable) else PairTable.from_pairs(pairs)
    if len(mask) != table.X.shape[1]:
        raise ValueError(f"mask length {len(mask)} != feature count {table.X.shape[1]}")
    cols = list(mask.indices)
    return PairTable(
        X=table.X[:, cols],
        y=table.y,
        pair_ids=table.pair_ids,
        dataset_ids=table.dataset_ids,
        feature_names=tuple(table.feature_names[i] for i in cols),
    )
