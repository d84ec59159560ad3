from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from wifi_distance.errors import ConfigError

logger = logging.getLogger(__name__)

LEARNER_KINDS: Tuple[str, ...] = ("ols", "ridge", "knn", "cart", "gbt")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class PipelineConfig(_Strict):
    rssi_min_dbm: float = -95.0
    rssi_max_dbm: float = -20.0
    train_filter_m: float = Field(default=25.0, gt=0)
    proximity_threshold_m: float = Field(default=4.0, gt=0)
    same_floor_only: bool = True
    minkowski_p: float = Field(default=3.0, ge=1)
    wminkowski_p: float = Field(default=3.0, ge=1)
    # A uniform weight, or a MAC -> weight map (MACs not listed weigh 1.0).
    wminkowski_weights: Union[float, Dict[str, float]] = 1.0
    split_fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15)
    seed: int = 0

    @field_validator("wminkowski_weights")
    @classmethod
    def _positive_weights(cls, v):
        values = list(v.values()) if isinstance(v, dict) else [v]
        if any(not (float(w) > 0) for w in values):
            raise ValueError("wminkowski_weights must be > 0")
        return v

    @field_validator("split_fractions")
    @classmethod
    def _fractions(cls, v):
        if any(f < 0 for f in v):
            raise ValueError("split fractions must be >= 0")
        if not math.isclose(sum(v), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must sum to 1")
        return v

    @model_validator(mode="after")
    def _rssi_bounds(self):
        if not self.rssi_min_dbm < self.rssi_max_dbm:
            raise ValueError("rssi_min_dbm must be < rssi_max_dbm")
        return self


class GAConfig(_Strict):
    population_size: int = Field(default=32, ge=2)
    generations: int = Field(default=40, ge=1)
    tournament_size: int = Field(default=3, ge=1)
    crossover_rate: float = Field(default=0.9, ge=0, le=1)
    mutation_rate: float = Field(default=1.0 / 14.0, ge=0, le=1)
    elitism: int = Field(default=2, ge=1)
    train_filter_m: float = Field(default=25.0, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _elitism_below_population(self):
        if self.elitism >= self.population_size:
            raise ValueError("elitism must be < population_size")
        return self


class ParamRange(_Strict):
    """One hyperparameter dimension: either explicit choices or a [low, high] range."""

    low: Optional[float] = None
    high: Optional[float] = None
    log: bool = False
    integer: bool = False
    choices: Optional[List[Any]] = None

    @model_validator(mode="after")
    def _non_empty(self):
        if self.choices is not None:
            if not self.choices:
                raise ValueError("choices must be non-empty")
            return self
        if self.low is None or self.high is None:
            raise ValueError("a range needs low and high (or choices)")
        if self.low > self.high:
            raise ValueError("low must be <= high")
        if self.log and self.low <= 0:
            raise ValueError("log-uniform ranges need low > 0")
        return self


def _default_spaces() -> Dict[str, Dict[str, ParamRange]]:
    return {
        "ols": {},
        "ridge": {"lam": ParamRange(low=1e-6, high=1e3, log=True)},
        "knn": {
            "k": ParamRange(low=1, high=50, integer=True),
            "weighting": ParamRange(choices=["uniform", "distance"]),
        },
        "cart": {
            "max_depth": ParamRange(low=2, high=30, integer=True),
            "min_samples_leaf": ParamRange(low=1, high=100, integer=True),
        },
        "gbt": {
            "n_trees": ParamRange(low=50, high=500, integer=True),
            "learning_rate": ParamRange(low=0.01, high=0.3),
            "depth": ParamRange(low=2, high=8, integer=True),
        },
    }


class HyperSpace(_Strict):
    spaces: Dict[str, Dict[str, ParamRange]] = Field(default_factory=_default_spaces)
    n_draws: int = Field(default=20, ge=1)
    seed: int = 0

    @field_validator("spaces")
    @classmethod
    def _known_kinds(cls, v):
        unknown = set(v) - set(LEARNER_KINDS)
        if unknown:
            raise ValueError(f"unknown learner kinds in search space: {sorted(unknown)}")
        return v

    def for_kind(self, kind: str) -> Dict[str, ParamRange]:
        return dict(self.spaces.get(kind) or {})


class EvalConfig(_Strict):
    beta: float = Field(default=0.05, gt=0)
    proximity_threshold_m: float = Field(default=4.0, gt=0)
    restrict_to_max_label_m: Optional[float] = Field(default=None, gt=0)
    repeats: int = Field(default=10, ge=1)
    histogram_bin_m: float = Field(default=1.0, gt=0)
    seed: int = 0


class VenueSpec(_Strict):
    dataset_id: str = "synth"
    width_m: float = Field(default=50.0, gt=0)
    height_m: float = Field(default=50.0, gt=0)
    ap_count: int = Field(default=10, ge=3)
    ap_layout: Literal["grid", "random"] = "random"
    # Explicit AP positions override ap_count/ap_layout.
    ap_positions: Optional[List[Tuple[float, float]]] = None
    tx_power_dbm: float = -30.0
    reference_distance_m: float = Field(default=1.0, gt=0)
    path_loss_exponent: float = Field(default=3.0, ge=1.5, le=6.0)
    shadowing_sigma_dbm: float = Field(default=4.0, ge=0)
    # 0 draws shadowing independently per scan.
    shadowing_correlation_m: float = Field(default=10.0, ge=0)
    fading_sigma_dbm: float = Field(default=1.0, ge=0)
    sensitivity_dbm: float = -95.0
    saturation_dbm: float = -20.0
    fingerprint_count: int = Field(default=200, ge=1)
    floor: int = 0
    mac_prefix: int = Field(default=0, ge=0, le=0xFFFF)
    seed: int = 0

    @model_validator(mode="after")
    def _ap_positions(self):
        if self.ap_positions is not None and len(self.ap_positions) < 3:
            raise ValueError("at least 3 AP positions are required")
        return self

    @property
    def effective_ap_count(self) -> int:
        return len(self.ap_positions) if self.ap_positions is not None else self.ap_count


class DatasetEntry(_Strict):
    dataset_id: str
    role: Literal["pool", "isolated"] = "pool"
    path: str


def _default_learners() -> Dict[str, Dict[str, Any]]:
    return {
        "ols": {},
        "ridge": {"lam": 1.0},
        "knn": {"k": 5, "weighting": "uniform"},
        "cart": {"max_depth": 10, "min_samples_leaf": 5},
        "gbt": {"n_trees": 100, "learning_rate": 0.1, "depth": 4, "min_samples_leaf": 1, "subsample": 1.0},
    }


class RunConfig(_Strict):
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    ga: GAConfig = Field(default_factory=GAConfig)
    search: HyperSpace = Field(default_factory=HyperSpace)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    venue: VenueSpec = Field(default_factory=VenueSpec)
    learners: Dict[str, Dict[str, Any]] = Field(default_factory=_default_learners)
    datasets: List[DatasetEntry] = Field(default_factory=list)
    output_dir: str = "runs"

    @field_validator("learners")
    @classmethod
    def _known_learners(cls, v):
        unknown = set(v) - set(LEARNER_KINDS)
        if unknown:
            raise ValueError(f"unknown learner kinds: {sorted(unknown)}")
        merged = _default_learners()
        for kind, params in v.items():
            merged[kind] = {**merged[kind], **(params or {})}
        return merged

    @field_validator("datasets")
    @classmethod
    def _unique_datasets(cls, v):
        ids = [d.dataset_id for d in v]
        if len(ids) != len(set(ids)):
            raise ValueError("dataset_ids must be unique")
        return v


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err.get("loc", ()))
        parts.append(f"{loc}: {err.get('msg')}")
    return "; ".join(parts)


def load_run_config(path: Optional[str | Path]) -> RunConfig:
    """Load a RunConfig from YAML; a missing path yields defaults."""
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"Config file not found: {p}")
    with p.open("r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {p}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"Invalid config file shape (expected mapping): {p}")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {p}: {_format_validation_error(e)}") from e
    logger.debug("Loaded run config from %s", p)
    return cfg


def apply_overrides(
    cfg: RunConfig,
    *,
    seed: Optional[int] = None,
    max_m: Optional[float] = None,
    beta: Optional[float] = None,
    threshold_m: Optional[float] = None,
    restrict: Optional[float] = None,
    output_dir: Optional[str] = None,
) -> RunConfig:
    """Return a validated copy of cfg with command-line flags applied (flags win over the file)."""
    data = cfg.model_dump()
    if seed is not None:
        for section in ("pipeline", "ga", "search", "eval", "venue"):
            data[section]["seed"] = int(seed)
    if max_m is not None:
        data["pipeline"]["train_filter_m"] = float(max_m)
        data["ga"]["train_filter_m"] = float(max_m)
    if beta is not None:
        data["eval"]["beta"] = float(beta)
    if threshold_m is not None:
        data["eval"]["proximity_threshold_m"] = float(threshold_m)
        data["pipeline"]["proximity_threshold_m"] = float(threshold_m)
    if restrict is not None:
        data["eval"]["restrict_to_max_label_m"] = float(restrict)
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid override: {_format_validation_error(e)}") from e
