from __future__ import annotations

import dataclasses

import numpy as np
import pandas as pd
import pytest

from wifi_distance.core.config import EvalConfig
from wifi_distance.fingerprints import PairRecord
from wifi_distance.selection.voting import (
    VOTERS,
    DegenerateLabels,
    decile_bins,
    export_votes,
    importance_votes,
    rfe_survivors,
)


EVAL = EvalConfig()


def with_column(pairs, j, values):
    out = []
    for p, v in zip(pairs, values):
        feats = list(p.features)
        feats[j] = float(v)
        out.append(dataclasses.replace(p, features=tuple(feats)))
    return out


def test_planted_features_collect_most_votes(planted):
    pairs, informative = planted
    table = importance_votes(pairs, EVAL)
    assert table.votes.shape == (14, len(VOTERS))
    for j in informative:
        assert table.totals[j] >= 3


def test_constant_column_gets_no_votes(planted):
    pairs, informative = planted
    j = next(i for i in range(14) if i not in informative)
    table = importance_votes(with_column(pairs, j, [7.0] * len(pairs)), EVAL)
    assert table.totals[j] == 0
    assert table.scores["chi2"][j] == 0.0


def test_duplicated_informative_column_gets_chi2_vote_twice(planted):
    pairs, informative = planted
    src = informative[0]
    dst = next(i for i in range(14) if i not in informative)
    dup = with_column(pairs, dst, [p.features[src] for p in pairs])
    table = importance_votes(dup, EVAL)
    chi2 = list(VOTERS).index("chi2")
    assert table.votes[src, chi2] and table.votes[dst, chi2]
    assert table.scores["chi2"][src] == pytest.approx(table.scores["chi2"][dst])


def test_votes_do_not_depend_on_row_order(planted):
    pairs, _ = planted
    subset = pairs[:600]
    shuffled = [subset[i] for i in np.random.default_rng(1).permutation(len(subset))]
    a = importance_votes(subset, EVAL)
    b = importance_votes(shuffled, EVAL)
    np.testing.assert_array_equal(a.votes, b.votes)
    for name in VOTERS:
        np.testing.assert_array_equal(a.scores[name], b.scores[name])


def test_single_class_labels_are_rejected():
    pairs = [
        PairRecord(fp_a_id=f"a{i}", fp_b_id="b", dataset_id="d", features=(float(i),) * 14, label_m=10.0 + i)
        for i in range(20)
    ]
    with pytest.raises(DegenerateLabels):
        importance_votes(pairs, EVAL)


def test_decile_bins_cover_ten_groups():
    bins = decile_bins(np.arange(1000, dtype=float))
    assert bins.min() == 0 and bins.max() == 9
    assert np.all(np.bincount(bins) == 100)
    assert len(np.unique(decile_bins(np.full(50, 3.0)))) == 1


def test_rfe_keeps_requested_number_of_columns():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(200, 10))
    y = 5 * X[:, 2] - 3 * X[:, 7] + 0.1 * rng.normal(size=200)
    survivors, dropped_at = rfe_survivors(X, y, keep=2)
    assert survivors.nonzero()[0].tolist() == [2, 7]
    assert dropped_at[2] == dropped_at[7] == 9
    assert sorted(dropped_at[~survivors].tolist()) == list(range(1, 9))


def test_export_votes(tmp_path, planted):
    pairs, _ = planted
    table = importance_votes(pairs[:500], EVAL)
    df = pd.read_csv(export_votes(table, tmp_path / "votes.csv"))
    assert df["feature"].tolist() == list(table.feature_names)
    assert df["total"].tolist() == table.totals.tolist()
