from __future__ import annotations

from pathlib import Path
import sys

# Ensure repo root is importable
REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT))


import pytest

from wifi_distance.core.config import GAConfig, HyperSpace, ParamRange, RunConfig, VenueSpec
from wifi_distance.core.settings import Settings
from wifi_distance.fingerprints import generate_pairs
from wifi_distance.synth import generate_venue, planted_feature_pairs


@pytest.fixture()
def settings(tmp_path: Path) -> Settings:
    return Settings(
        config_file=str(REPO_ROOT / "config" / "pipeline.yaml"),
        output_dir=str(tmp_path / "runs"),
        log_level="DEBUG",
        workers=1,
        lock_timeout_s=5.0,
    )


@pytest.fixture()
def run_config() -> RunConfig:
    """A run config small enough for end-to-end tests to finish in seconds."""
    return RunConfig(
        ga=GAConfig(population_size=8, generations=3, elitism=1),
        search=HyperSpace(
            n_draws=2,
            spaces={
                "ridge": {"lam": ParamRange(low=1e-3, high=10.0, log=True)},
                "knn": {"k": ParamRange(low=1, high=10, integer=True)},
                "cart": {"max_depth": ParamRange(low=2, high=6, integer=True)},
                "gbt": {"n_trees": ParamRange(low=5, high=10, integer=True)},
            },
        ),
        learners={"gbt": {"n_trees": 10, "depth": 3}},
        venue=VenueSpec(fingerprint_count=60, seed=7),
    )


@pytest.fixture(scope="session")
def small_venue():
    return generate_venue(VenueSpec(fingerprint_count=80, ap_count=10, seed=11))


@pytest.fixture(scope="session")
def venue_pairs(small_venue):
    return generate_pairs(small_venue, RunConfig().pipeline)


@pytest.fixture(scope="session")
def planted():
    return planted_feature_pairs(2000, seed=3)
