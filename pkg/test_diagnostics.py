#!/usr/bin/env python3
"""
Test leave-one-out shares, correlations, sign tests and descriptives
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from deviations import per_stratum_tables
from diagnostics import (
    CorrelationKind,
    CorrelationStatus,
    attribute_correlation,
    attribute_value,
    describe_strata,
    deviation_sign_correlation,
    deviation_sign_test,
    leave_one_out,
    size_share_correlation,
)
from ingest import DataValidationError, DepartmentRecord, Stratum, build_dataset
from synthetic_corpus import CorpusSpec, Regime, generate


def records(rows):
    return [DepartmentRecord(stratum_key=s, unit_key=u, size=n, minority=y) for s, u, n, y in rows]


def test_leave_one_out_hand_example():
    dataset = build_dataset(records([("A", "u1", 4, 1), ("A", "u2", 6, 2)]))
    report = leave_one_out(dataset.stratum("A"))
    assert report.share == pytest.approx(0.3)
    assert report.loo_fractions == [Fraction(1, 3), Fraction(1, 4)]
    assert report.loo_shares == pytest.approx((1 / 3, 1 / 4))
    assert report.std_dev == pytest.approx(1 / 24, rel=1e-12)
    assert report.pooled_share == Fraction(3, 10)
    assert report.std_kind == "population"
    assert 0.0 <= report.reject_fraction <= 1.0


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(min_value=3, max_value=40), min_size=2, max_size=20).flatmap(
        lambda sizes: st.tuples(
            st.just(sizes),
            st.tuples(*[st.integers(min_value=0, max_value=n) for n in sizes]),
        )
    )
)
def test_pooled_leave_one_out_share_equals_stratum_share(case):
    sizes, minorities = case
    stratum = Stratum(
        key="s",
        departments=tuple(
            DepartmentRecord(stratum_key="s", unit_key=f"u{i:03d}", size=n, minority=y)
            for i, (n, y) in enumerate(zip(sizes, minorities))
        ),
    )
    assert leave_one_out(stratum).pooled_share == stratum.share


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(min_value=3, max_value=40), min_size=2, max_size=20).flatmap(
        lambda sizes: st.tuples(
            st.just(sizes),
            st.tuples(*[st.integers(min_value=0, max_value=n) for n in sizes]),
        )
    )
)
def test_leave_one_out_moves_away_from_own_share(case):
    sizes, minorities = case
    stratum = Stratum(
        key="s",
        departments=tuple(
            DepartmentRecord(stratum_key="s", unit_key=f"u{i:03d}", size=n, minority=y)
            for i, (n, y) in enumerate(zip(sizes, minorities))
        ),
    )
    report = leave_one_out(stratum)
    for department, loo in zip(stratum.departments, report.loo_fractions):
        own = Fraction(department.minority, department.size)
        if own > stratum.share:
            assert loo < stratum.share
        elif own < stratum.share:
            assert loo > stratum.share
        else:
            assert loo == stratum.share


def test_leave_one_out_flags_an_outlying_department():
    rows = [("A", f"u{i}", 20, 4) for i in range(9)] + [("A", "u9", 200, 190)]
    report = leave_one_out(build_dataset(records(rows)).stratum("A"))
    assert report.reject_fraction > 0.0


def test_leave_one_out_errors():
    dataset = build_dataset(records([("A", "u1", 4, 1), ("A", "u2", 6, 2)]))
    with pytest.raises(ValueError):
        leave_one_out(dataset.stratum("A"), alpha=1.5)
    single = build_dataset(records([("B", "u1", 5, 2)]))
    with pytest.raises(DataValidationError):
        leave_one_out(single.stratum("B"))


def linear_strata():
    # mean size and share both grow by the same step
    return build_dataset(
        records(
            [
                ("A", "u1", 10, 1), ("A", "u2", 10, 1),
                ("B", "u1", 20, 4), ("B", "u2", 20, 4),
                ("C", "u1", 30, 9), ("C", "u2", 30, 9),
            ]
        )
    )


def test_perfect_correlation_is_degenerate():
    report = size_share_correlation(linear_strata())
    assert report.kind is CorrelationKind.SIZE_VS_SHARE
    assert report.status is CorrelationStatus.DEGENERATE
    assert report.rho == 1.0
    assert report.p_value == 0.0
    assert report.ci_95 == (1.0, 1.0)


def test_constant_variable_is_undefined():
    dataset = build_dataset(
        records([("A", "u1", 10, 1), ("A", "u2", 10, 2), ("B", "u1", 10, 3), ("C", "u1", 10, 5)])
    )
    report = size_share_correlation(dataset)
    assert report.status is CorrelationStatus.UNDEFINED
    assert report.rho is None
    assert report.p_value is None


def test_correlation_matches_scipy():
    dataset = generate(CorpusSpec(n_strata=12, departments_per_stratum=(5, 9), seed=21))
    report = size_share_correlation(dataset)
    sizes = [s.mean_size for s in dataset.strata]
    shares = [s.share_float for s in dataset.strata]
    reference = stats.pearsonr(sizes, shares)

    assert report.status is CorrelationStatus.OK
    assert report.n == 12
    assert report.rho == pytest.approx(reference[0], abs=1e-12)
    assert report.p_value == pytest.approx(reference[1], rel=1e-6)
    half_width = 1.959963984540054 / 3.0
    lo, hi = report.ci_95
    assert lo == pytest.approx(math.tanh(math.atanh(report.rho) - half_width), abs=1e-9)
    assert hi == pytest.approx(math.tanh(math.atanh(report.rho) + half_width), abs=1e-9)


def test_correlation_invariant_under_affine_rescaling():
    dataset = generate(CorpusSpec(n_strata=10, departments_per_stratum=(5, 8), seed=13))
    departments = [d for s in dataset.strata for d in s.departments]

    doubled = build_dataset(
        DepartmentRecord(stratum_key=d.stratum_key, unit_key=d.unit_key, size=2 * d.size, minority=2 * d.minority)
        for d in departments
    )
    original, rescaled = size_share_correlation(dataset), size_share_correlation(doubled)
    assert rescaled.rho == pytest.approx(original.rho, abs=1e-12)
    assert rescaled.p_value == pytest.approx(original.p_value, rel=1e-9)

    scores = {s.key: 0.5 + (i * 7 % 10) / 3.0 for i, s in enumerate(dataset.strata)}
    plain = build_dataset(departments, attributes={k: {"score": repr(v)} for k, v in scores.items()})
    shifted = build_dataset(departments, attributes={k: {"score": repr(4.0 * v - 11.0)} for k, v in scores.items()})
    tables = per_stratum_tables(dataset, z_max=2)
    first = attribute_correlation(plain, tables, 2, "score")
    second = attribute_correlation(shifted, tables, 2, "score")
    assert first.status is CorrelationStatus.OK
    assert second.rho == pytest.approx(first.rho, abs=1e-12)
    assert second.p_value == pytest.approx(first.p_value, rel=1e-9)
    assert second.ci_95 == pytest.approx(first.ci_95, abs=1e-12)


def test_correlations_need_three_strata():
    dataset = build_dataset(records([("A", "u1", 4, 1), ("A", "u2", 6, 2), ("B", "u1", 5, 1), ("B", "u2", 7, 3)]))
    tables = per_stratum_tables(dataset, z_max=2)
    with pytest.raises(ValueError):
        deviation_sign_correlation(dataset, tables, 0)
    with pytest.raises(ValueError):
        size_share_correlation(dataset)


def test_sign_test_on_hard_quota_corpus():
    dataset = generate(CorpusSpec(n_strata=8, departments_per_stratum=12, regime=Regime.HARD_QUOTA, seed=2))
    tables = per_stratum_tables(dataset, z_max=3)

    zeros = deviation_sign_test(tables, 0)
    assert zeros.n_strata == 8
    assert zeros.n_negative == 8
    assert zeros.fraction_negative == 1.0
    assert zeros.p_value == pytest.approx(2 * 0.5**8)

    twos = deviation_sign_test(tables, 2)
    assert twos.n_negative == 0

    report = deviation_sign_correlation(dataset, tables, 0)
    assert report.status is CorrelationStatus.UNDEFINED

    with pytest.raises(ValueError):
        deviation_sign_test(tables, 4)


def test_deviation_sign_correlation_on_null_corpus():
    dataset = generate(CorpusSpec(n_strata=20, departments_per_stratum=(10, 15), seed=8))
    tables = per_stratum_tables(dataset, z_max=3)
    report = deviation_sign_correlation(dataset, tables, 0)
    assert report.kind is CorrelationKind.DEVIATION_SIGN_VS_SHARE
    assert report.z == 0
    assert report.n == 20
    if report.status is CorrelationStatus.OK:
        assert -1.0 < report.rho < 1.0
        assert 0.0 <= report.p_value <= 1.0


@pytest.mark.parametrize(
    "raw, value",
    [("true", 1.0), (" Yes ", 1.0), ("0", 0.0), ("F", 0.0), ("2.5", 2.5), ("stem", None)],
)
def test_attribute_value(raw, value):
    assert attribute_value(raw) == value


def test_attribute_correlation():
    dataset = generate(CorpusSpec(n_strata=6, departments_per_stratum=10, seed=5))
    keys = [s.key for s in dataset.strata]
    attributes = {key: {"stem": "yes" if i % 2 else "no"} for i, key in enumerate(keys)}
    dataset = build_dataset([d for s in dataset.strata for d in s.departments], attributes=attributes)
    tables = per_stratum_tables(dataset, z_max=2)

    report = attribute_correlation(dataset, tables, 2, "stem")
    assert report.attribute == "stem"
    assert report.n == 6
    assert report.status in (CorrelationStatus.OK, CorrelationStatus.DEGENERATE)

    missing = attribute_correlation(dataset, tables, 2, "unknown")
    assert missing.status is CorrelationStatus.UNDEFINED
    assert missing.n == 0


def test_describe_strata():
    summaries = describe_strata(linear_strata())
    assert [s.discipline for s in summaries] == ["A", "B", "C"]
    assert summaries[1].departments == 2
    assert summaries[1].total_size == 40
    assert summaries[1].share == pytest.approx(0.2)
    assert summaries[2].mean_size == 30.0
    assert not any(s.degenerate for s in summaries)


def _size_share_p_values(repetitions, spec_for_seed):
    return [size_share_correlation(generate(spec_for_seed(seed))).p_value for seed in range(repetitions)]


def test_correlation_p_values_uniform_reduced_scale():
    p_values = _size_share_p_values(
        100, lambda seed: CorpusSpec(n_strata=12, departments_per_stratum=(6, 10), seed=300 + seed)
    )
    assert stats.kstest(p_values, "uniform").pvalue > 0.001


@pytest.mark.slow
def test_correlation_p_values_uniform_full_scale():
    p_values = _size_share_p_values(500, lambda seed: CorpusSpec(seed=300 + seed))
    assert stats.kstest(p_values, "uniform").pvalue > 0.01


def _sign_correlation_p_values(repetitions, spec_for_seed, z=0):
    # deviations are shuffled across strata so their signs are independent of the shares
    p_values = []
    for seed in range(repetitions):
        dataset = generate(spec_for_seed(seed))
        tables = per_stratum_tables(dataset, z_max=z)
        keys = [t.scope for t in tables]
        order = np.random.default_rng(seed).permutation(len(tables))
        shuffled = [t.model_copy(update={"scope": keys[i]}) for t, i in zip(tables, order)]
        report = deviation_sign_correlation(dataset, shuffled, z)
        if report.status is CorrelationStatus.OK:
            p_values.append(report.p_value)
    return p_values


def test_sign_correlation_p_values_uniform_reduced_scale():
    p_values = _sign_correlation_p_values(
        150, lambda seed: CorpusSpec(n_strata=20, departments_per_stratum=(10, 15), seed=700 + seed)
    )
    assert len(p_values) >= 120
    assert stats.kstest(p_values, "uniform").pvalue > 0.001


@pytest.mark.slow
def test_sign_correlation_p_values_uniform_full_scale():
    p_values = _sign_correlation_p_values(500, lambda seed: CorpusSpec(seed=700 + seed))
    assert stats.kstest(p_values, "uniform").pvalue > 0.01
