from __future__ import annotations

import math
from pathlib import Path

import pytest
from pydantic import ValidationError

from wifi_distance.core.config import (
    EvalConfig,
    GAConfig,
    HyperSpace,
    ParamRange,
    PipelineConfig,
    RunConfig,
    VenueSpec,
    apply_overrides,
    load_run_config,
)
from wifi_distance.core.settings import Settings, resolve_path
from wifi_distance.errors import ConfigError

REPO_ROOT = Path(__file__).resolve().parents[1]


def write_yaml(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text, encoding="utf-8")
    return p


def test_shipped_config_loads_with_defaults():
    cfg = load_run_config(REPO_ROOT / "config" / "pipeline.yaml")
    assert cfg.pipeline.train_filter_m == 25.0
    assert cfg.eval.beta == 0.05
    assert cfg.eval.proximity_threshold_m == 4.0
    assert cfg.eval.restrict_to_max_label_m == 25.0
    assert cfg.pipeline.split_fractions == (0.70, 0.15, 0.15)
    assert cfg.search.for_kind("ridge")["lam"].log is True
    assert cfg.datasets == []


def test_missing_path_gives_defaults_and_missing_file_is_error(tmp_path):
    assert load_run_config(None) == RunConfig()
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "nope.yaml")


@pytest.mark.parametrize(
    "text",
    [
        "pipeline:\n  bogus_key: 1\n",
        "eval:\n  beta: 0\n",
        "pipeline:\n  split_fractions: [0.5, 0.5, 0.5]\n",
        "ga:\n  population_size: 4\n  elitism: 4\n",
        "learners:\n  svm: {}\n",
        "- just\n- a list\n",
        "pipeline: [unclosed\n",
    ],
)
def test_invalid_configs_raise_config_error(tmp_path, text):
    with pytest.raises(ConfigError):
        load_run_config(write_yaml(tmp_path, text))


def test_partial_learner_params_merge_with_defaults(tmp_path):
    cfg = load_run_config(write_yaml(tmp_path, "learners:\n  gbt: {n_trees: 7}\n"))
    assert cfg.learners["gbt"]["n_trees"] == 7
    assert cfg.learners["gbt"]["depth"] == 4
    assert cfg.learners["ridge"] == {"lam": 1.0}


def test_overrides_win_over_file_values():
    cfg = apply_overrides(RunConfig(), seed=5, max_m=math.inf, beta=0.5, threshold_m=3.0, restrict=30.0, output_dir="x")
    assert cfg.pipeline.seed == cfg.ga.seed == cfg.search.seed == cfg.eval.seed == cfg.venue.seed == 5
    assert math.isinf(cfg.pipeline.train_filter_m) and math.isinf(cfg.ga.train_filter_m)
    assert cfg.eval.beta == 0.5
    assert cfg.eval.proximity_threshold_m == cfg.pipeline.proximity_threshold_m == 3.0
    assert cfg.eval.restrict_to_max_label_m == 30.0
    assert cfg.output_dir == "x"
    assert apply_overrides(cfg) == cfg
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), beta=-1.0)


def test_model_validation_rules():
    with pytest.raises(ValidationError):
        PipelineConfig(rssi_min_dbm=-20.0, rssi_max_dbm=-95.0)
    with pytest.raises(ValidationError):
        PipelineConfig(wminkowski_weights={"aa:bb:cc:dd:ee:ff": 0.0})
    with pytest.raises(ValidationError):
        ParamRange(low=0.0, high=1.0, log=True)
    with pytest.raises(ValidationError):
        ParamRange(choices=[])
    with pytest.raises(ValidationError):
        HyperSpace(spaces={"svm": {}})
    with pytest.raises(ValidationError):
        VenueSpec(ap_positions=[(0.0, 0.0), (1.0, 1.0)])
    with pytest.raises(ValidationError):
        EvalConfig(repeats=0)
    assert GAConfig(population_size=2, generations=1, elitism=1).generations == 1
    assert VenueSpec(ap_positions=[(0, 0), (1, 1), (2, 2), (3, 3)]).effective_ap_count == 4


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv("WIFI_DISTANCE_WORKERS", "3")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    monkeypatch.setenv("ARTIFACT_LOCK_TIMEOUT_S", "not-a-number")
    s = Settings()
    assert s.workers == 3
    assert s.log_level == "DEBUG"
    assert s.lock_timeout_s == 30.0
    monkeypatch.setenv("WIFI_DISTANCE_WORKERS", "0")
    assert Settings().workers == 1


def test_resolve_path_anchors_relative_paths_at_repo_root(tmp_path):
    assert resolve_path(str(tmp_path)) == tmp_path
    assert resolve_path("config/pipeline.yaml") == (REPO_ROOT / "config" / "pipeline.yaml").resolve()
