#!/usr/bin/env python3
"""
Test the counterfactual fixed-quota simulation
"""

import pandas as pd
import pytest

from ingest import DepartmentRecord, build_dataset
from quota_sim import apply_quota, export_shares, share_vectors
from synthetic_corpus import CorpusSpec, generate


def records(rows):
    return [DepartmentRecord(stratum_key=s, unit_key=u, size=n, minority=y) for s, u, n, y in rows]


@pytest.fixture
def economics():
    sizes = (6, 16, 12, 7, 23)
    minorities = (0, 2, 2, 1, 5)
    return build_dataset(records([("Econ", f"u{i}", n, y) for i, (n, y) in enumerate(zip(sizes, minorities))]))


def test_quota_table_reproduction(economics):
    scenario = apply_quota(economics, 2)
    assert scenario.per_department_counts["Econ"] == (2, 2, 2, 2, 2)
    assert scenario.per_stratum_shares["Econ"] == pytest.approx(10 / 64)
    assert scenario.actual_shares["Econ"] == pytest.approx(10 / 64)


def test_zero_quota(economics):
    scenario = apply_quota(economics, 0)
    assert scenario.per_department_counts["Econ"] == (0, 0, 0, 0, 0)
    assert scenario.mean_share_sim == 0.0


def test_constant_size_stratum():
    dataset = build_dataset(records([("A", f"u{i}", 8, 1) for i in range(5)]))
    assert apply_quota(dataset, 2).per_stratum_shares["A"] == 0.25


def test_large_quota_saturates():
    dataset = generate(CorpusSpec(n_strata=5, departments_per_stratum=8, size_range=(5, 12), seed=1))
    actual, simulated = share_vectors(dataset, apply_quota(dataset, 12))
    assert simulated == [1.0] * 5
    assert len(actual) == 5


def test_single_stratum_vectors(economics):
    actual, simulated = share_vectors(economics, apply_quota(economics, 1))
    assert actual == [pytest.approx(10 / 64)]
    assert simulated == [pytest.approx(5 / 64)]


def test_counts_never_exceed_size_and_grow_with_quota():
    dataset = generate(CorpusSpec(n_strata=6, departments_per_stratum=(5, 10), seed=4))
    previous = None
    for q in range(0, 8):
        scenario = apply_quota(dataset, q)
        for stratum in dataset.strata:
            counts = scenario.per_department_counts[stratum.key]
            assert all(c <= n for c, n in zip(counts, stratum.sizes))
        if previous is not None:
            for key, share in scenario.per_stratum_shares.items():
                assert share >= previous.per_stratum_shares[key]
        previous = scenario


def test_share_falls_with_mean_department_size():
    rows = []
    for key, size in (("A", 5), ("B", 10), ("C", 20), ("D", 40)):
        rows += [(key, f"u{i}", size, 1) for i in range(4)]
    scenario = apply_quota(build_dataset(records(rows)), 3)
    shares = [scenario.per_stratum_shares[key] for key in "ABCD"]
    assert shares == pytest.approx([3 / 5, 3 / 10, 3 / 20, 3 / 40])
    assert shares == sorted(shares, reverse=True)


def test_identical_size_multisets_give_equal_shares():
    dataset = build_dataset(
        records([("A", "u1", 5, 1), ("A", "u2", 9, 4), ("B", "u1", 9, 0), ("B", "u2", 5, 5)])
    )
    scenario = apply_quota(dataset, 3)
    assert scenario.per_stratum_shares["A"] == scenario.per_stratum_shares["B"]


def test_weighted_and_unweighted_means():
    dataset = build_dataset(records([("A", "u1", 4, 1), ("A", "u2", 4, 1), ("B", "u1", 20, 10)]))
    unweighted = apply_quota(dataset, 2)
    weighted = apply_quota(dataset, 2, weighted=True)
    assert unweighted.mean_share_sim == pytest.approx((0.5 + 0.1) / 2)
    assert weighted.mean_share_sim == pytest.approx(6 / 28)
    assert weighted.mean_share_actual == pytest.approx(12 / 28)
    assert unweighted.mean_share_actual == pytest.approx((0.25 + 0.5) / 2)


def test_errors(economics):
    with pytest.raises(ValueError):
        apply_quota(economics, -1)
    other = build_dataset(records([("Bio", "u1", 5, 2)]))
    with pytest.raises(ValueError):
        share_vectors(other, apply_quota(economics, 2))


def test_export_shares(economics, tmp_path):
    path = tmp_path / "shares.csv"
    export_shares(economics, apply_quota(economics, 2), str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["discipline", "actual_share", "simulated_share"]
    assert frame.loc[0, "discipline"] == "Econ"
    assert frame.loc[0, "simulated_share"] == pytest.approx(10 / 64)
