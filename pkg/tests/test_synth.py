from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import spearmanr

from wifi_distance.core.config import PipelineConfig, VenueSpec
from wifi_distance.fingerprints import filter_by_label, generate_pairs
from wifi_distance.signal_metrics import FEATURE_NAMES
from wifi_distance.synth import (
    ShadowingField,
    ap_mac,
    generate_venue,
    generate_venues,
    path_loss_rssi,
    planted_feature_pairs,
)


def test_path_loss_reference_values():
    assert path_loss_rssi(1.0) == pytest.approx(-30.0)
    assert path_loss_rssi(10.0) == pytest.approx(-60.0)
    assert path_loss_rssi(0.2) == pytest.approx(-30.0)
    np.testing.assert_allclose(path_loss_rssi([1.0, 10.0, 100.0], path_loss_exponent=2.0), [-30.0, -50.0, -70.0])


def test_noise_free_venue_matches_path_loss():
    spec = VenueSpec(
        fingerprint_count=30,
        shadowing_sigma_dbm=0.0,
        fading_sigma_dbm=0.0,
        ap_positions=[(0.0, 0.0), (50.0, 0.0), (25.0, 50.0)],
        seed=3,
    )
    aps = np.array(spec.ap_positions)
    for fp in generate_venue(spec):
        for i, (x, y) in enumerate(aps):
            mac = ap_mac(spec.mac_prefix, i)
            expected = path_loss_rssi(np.hypot(x - fp.x_m, y - fp.y_m))
            if spec.sensitivity_dbm <= expected <= spec.saturation_dbm:
                assert fp.readings[mac] == pytest.approx(expected)
            else:
                assert mac not in fp.readings


def test_same_seed_same_venue():
    spec = VenueSpec(fingerprint_count=40, seed=21)
    assert generate_venue(spec) == generate_venue(spec)
    assert generate_venue(spec) != generate_venue(spec.model_copy(update={"seed": 22}))


def test_venue_shape(small_venue):
    assert len(small_venue) <= 80
    assert len({f.id for f in small_venue}) == len(small_venue)
    for f in small_venue:
        assert 0 <= f.x_m <= 50 and 0 <= f.y_m <= 50
        assert all(-95.0 <= v <= -20.0 for v in f.readings.values())
        assert len(f.readings) <= 10


def test_grid_layout_places_requested_ap_count():
    fps = generate_venue(VenueSpec(fingerprint_count=10, ap_count=7, ap_layout="grid", shadowing_sigma_dbm=0.0))
    macs = set().union(*(f.readings for f in fps))
    assert macs <= {ap_mac(0, i) for i in range(7)}


def test_rssi_distance_tracks_spatial_distance(small_venue):
    pairs = filter_by_label(generate_pairs(small_venue, PipelineConfig()), 25.0)
    euclid = FEATURE_NAMES.index("euclidean")
    rho, _ = spearmanr([p.features[euclid] for p in pairs], [p.label_m for p in pairs])
    assert rho > 0.5


def test_generate_venues_requires_distinct_ids_and_prefixes():
    with pytest.raises(ValueError):
        generate_venues([VenueSpec(dataset_id="a"), VenueSpec(dataset_id="a", mac_prefix=1)])
    with pytest.raises(ValueError):
        generate_venues([VenueSpec(dataset_id="a"), VenueSpec(dataset_id="b")])
    fps = generate_venues(
        [VenueSpec(dataset_id="a", fingerprint_count=5), VenueSpec(dataset_id="b", fingerprint_count=5, mac_prefix=1)]
    )
    a_macs = set().union(*(f.readings for f in fps if f.dataset_id == "a"))
    b_macs = set().union(*(f.readings for f in fps if f.dataset_id == "b"))
    assert a_macs.isdisjoint(b_macs)


def test_planted_pairs_correlations():
    pairs, informative = planted_feature_pairs(5000, seed=8)
    X = np.array([p.features for p in pairs])
    y = np.array([p.label_m for p in pairs])
    assert X.shape == (5000, 14)
    assert len(informative) == 2
    for j in range(14):
        r = abs(np.corrcoef(X[:, j], y)[0, 1])
        if j in informative:
            assert r > 0.6
        else:
            assert r < 0.2
    assert planted_feature_pairs(200, seed=8)[1] == planted_feature_pairs(200, seed=8)[1]
    with pytest.raises(ValueError):
        planted_feature_pairs(50)
    counts = X[:, [FEATURE_NAMES.index("intersect_count"), FEATURE_NAMES.index("union_count")]]
    assert not set(informative) & {12, 13}
    assert (counts[:, 0] >= 2).all() and (counts[:, 1] >= counts[:, 0]).all()
    np.testing.assert_array_equal(counts, np.round(counts))


def test_planted_label_needs_both_columns():
    pairs, (i, j) = planted_feature_pairs(5000, seed=2)
    X = np.array([p.features for p in pairs])
    y = np.array([p.label_m for p in pairs])
    both = np.column_stack([X[:, i], X[:, j], np.ones(len(y))])
    resid = y - both @ np.linalg.lstsq(both, y, rcond=None)[0]
    assert resid.std() < 1.5
    assert abs(np.corrcoef(X[:, i], X[:, j])[0, 1]) < 0.1


def test_shadowing_field_is_smooth_over_short_distances():
    field = ShadowingField.draw(5, 4.0, 10.0, np.random.default_rng(0))
    pts = np.random.default_rng(1).uniform(0, 500, (2000, 2))
    here = np.array([field.at(x, y) for x, y in pts]).ravel()
    near = np.array([field.at(x + 1.0, y) for x, y in pts]).ravel()
    far = np.array([field.at(x + 40.0, y) for x, y in pts]).ravel()
    assert 3.0 < here.std() < 5.0
    assert np.corrcoef(here, near)[0, 1] > 0.95
    assert abs(np.corrcoef(here, far)[0, 1]) < 0.3
    with pytest.raises(ValueError):
        ShadowingField.draw(5, 4.0, 0.0, np.random.default_rng(0))


def test_close_scans_read_alike_under_correlated_shadowing():
    def mean_gap(spec):
        fps = generate_venue(spec)
        pairs = [p for p in generate_pairs(fps, PipelineConfig()) if p.label_m <= 3.0]
        return np.mean([p.features[FEATURE_NAMES.index("euclidean")] for p in pairs])

    spec = VenueSpec(fingerprint_count=300, seed=5)
    iid = spec.model_copy(update={"shadowing_correlation_m": 0.0})
    assert mean_gap(spec) < 0.6 * mean_gap(iid)
