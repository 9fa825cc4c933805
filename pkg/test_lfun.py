"""Truncated Dirichlet polynomials for L'/L and family sweeps."""

import math

import numpy as np
import pytest

from discriminants import enumerate_family, kronecker
from errors import CutoffError, DomainError
from lfun import (
    CONSISTENCY_SIGMAS,
    FamilyEvaluator,
    VonMangoldtTables,
    consistency_scale,
    dirichlet_convolve,
    evaluate_family,
    family_moment,
    partial_sum_bound,
    power_consistency_gap,
    principal_main_term,
    truncated_logderiv_pow,
    von_mangoldt,
    von_mangoldt_table,
)
from models import FundamentalDiscriminant, LogDerivValue, TruncationParams
from storage import MemorySweepStorage, TextSweepStorage

LOG2, LOG3, LOG5, LOG7 = (math.log(p) for p in (2, 3, 5, 7))


def direct_value(d, eps, cutoff):
    return -math.fsum(von_mangoldt(n) * kronecker(d, n) / n ** (0.5 + eps) for n in range(2, cutoff + 1))


@pytest.mark.parametrize("n,expected", [
    (1, 0.0), (2, LOG2), (4, LOG2), (8, LOG2), (6, 0.0), (9, LOG3), (7, LOG7), (12, 0.0), (125, LOG5),
])
def test_von_mangoldt(n, expected):
    assert von_mangoldt(n) == pytest.approx(expected)


def test_von_mangoldt_table_matches_scalar():
    table = von_mangoldt_table(300)
    for n in range(1, 301):
        assert table[n] == pytest.approx(von_mangoldt(n))


@pytest.mark.parametrize("limit", [1, 2, 3, 10])
def test_von_mangoldt_table_skips_zero_and_one(limit):
    table = von_mangoldt_table(limit)
    assert table[0] == 0.0
    assert table[1] == 0.0
    assert np.all(np.isfinite(table))
    assert table.tolist() == pytest.approx([von_mangoldt(n) if n else 0.0 for n in range(limit + 1)])


def test_lambda_k_values():
    tables = VonMangoldtTables(100, k_max=4)
    assert tables.lambda_k(4, 2) == pytest.approx(LOG2 ** 2)
    assert tables.lambda_k(6, 2) == pytest.approx(2 * LOG2 * LOG3)
    assert tables.lambda_k(8, 2) == pytest.approx(2 * LOG2 ** 2)
    assert tables.lambda_k(7, 2) == 0.0
    assert tables.lambda_k(8, 3) == pytest.approx(LOG2 ** 3)
    assert tables.lambda_k(1, 3) == 0.0


def test_lambda_k_bounded_by_log_power():
    tables = VonMangoldtTables(500, k_max=4)
    for k in range(1, 5):
        row = tables.table(k)
        for n in range(2, 501):
            assert row[n] <= math.log(n) ** k + 1e-9


def test_convolution_is_symmetric():
    a = von_mangoldt_table(200)
    b = np.log(np.arange(201, dtype=np.float64).clip(1))
    assert np.allclose(dirichlet_convolve(a, b), dirichlet_convolve(b, a))


def test_convolution_of_lambda_with_one_is_log():
    a = von_mangoldt_table(300)
    ones = np.ones(301)
    assert np.allclose(dirichlet_convolve(a, ones)[1:], np.log(np.arange(1, 301)))


def test_tables_refuse_out_of_range():
    tables = VonMangoldtTables(50, k_max=2)
    with pytest.raises(CutoffError):
        tables.lambda_k(51, 1)
    with pytest.raises(CutoffError):
        tables.table(3)
    with pytest.raises(CutoffError):
        tables.weights(1, 0.75, 60)


def test_cutoff_below_two_gives_empty_sum():
    tables = VonMangoldtTables(10)
    assert not tables.weights(1, 0.75, 1).any()


def test_partial_sum_within_growth_scale():
    tables = VonMangoldtTables(2000)
    for lam in (10.5, 100.5, 1000.5):
        assert 0 < tables.partial_sum(1, 0.75, lam) <= 2 * partial_sum_bound(1, 0.75, lam)


def test_value_for_d_equal_one():
    params = TruncationParams(epsilon=0.25, lambda_value=2.5)
    value = truncated_logderiv_pow(FundamentalDiscriminant(1), 1, params)
    assert value == pytest.approx(-LOG2 / 2 ** 0.75)


def test_value_matches_direct_sum():
    params = TruncationParams(epsilon=0.1, lambda_value=200.5)
    tables = VonMangoldtTables(200)
    for d in (1, -3, -4, 5, -7, 8, -8, 101, -163):
        got = truncated_logderiv_pow(FundamentalDiscriminant(d), 1, params, tables)
        assert got == pytest.approx(direct_value(d, 0.1, 200), abs=1e-12)


def test_second_power_sign_and_gap():
    params = TruncationParams(epsilon=0.25, lambda_value=2.5)
    d = FundamentalDiscriminant(5)
    assert truncated_logderiv_pow(d, 2, params) == 0.0
    assert power_consistency_gap(d, params) == pytest.approx((LOG2 / 2 ** 0.75) ** 2)
    with pytest.raises(DomainError):
        truncated_logderiv_pow(d, 0, params)


def test_truncation_policy():
    assert TruncationParams.for_bound(10, 0.25).lambda_value == 3.5
    assert TruncationParams.for_bound(10**4, 0.25).lambda_value == 251.5
    assert TruncationParams.for_bound(2, 0.25).lambda_value == 2.5
    assert TruncationParams.for_bound(10**12, 0.25, cap=1000).lambda_value == 1000.5
    for bad in (2.0, 1.5, 3.25):
        with pytest.raises(DomainError):
            TruncationParams(epsilon=0.25, lambda_value=bad)
    with pytest.raises(DomainError):
        TruncationParams(epsilon=0.5, lambda_value=2.5)


def test_sweep_of_ten(loose_params):
    values = evaluate_family(10, loose_params)
    assert [v.discriminant for v in values] == [1, -3, -4, 5, -7, 8, -8]
    assert not any(v.flagged for v in values)
    assert values[0].value == pytest.approx(-(LOG2 / 2 ** 0.75 + LOG3 / 3 ** 0.75))
    assert values[1].value == pytest.approx(LOG2 / 2 ** 0.75)
    assert all(v.lambda_used == 3.5 for v in values)


def test_sweep_audits_first_member(loose_params):
    values = evaluate_family(10, loose_params)
    # D = 1 sits at index 0 and is audited at lambda = 7.5 with the pole term removed
    block = LOG2 / 4 ** 0.75 + LOG5 / 5 ** 0.75 + LOG7 / 7 ** 0.75
    main_terms = principal_main_term(0.75, 7.5) - principal_main_term(0.75, 3.5)
    assert values[0].audited
    assert values[0].consistency_gap == pytest.approx(abs(main_terms - block))
    assert not values[1].audited


def test_sweep_flags_inconsistent_values():
    params = TruncationParams(epsilon=0.25, lambda_value=3.5, consistency_tol=0.05, audit_fraction=1.0)
    values = evaluate_family(10, params)
    assert all(v.audited for v in values)
    by_d = {v.discriminant: v for v in values}
    for d in (-3, -4, 5, -7, 8, -8):
        gap = abs(direct_value(d, 0.25, 7) - direct_value(d, 0.25, 3))
        assert by_d[d].consistency_gap == pytest.approx(gap, abs=1e-12)
        assert by_d[d].flagged == (gap > 0.05)
    # chi_{-3} is 1, -1, 1 on 4, 5, 7 and chi_{-4} is 0, 1, -1
    assert by_d[-3].flagged
    assert not by_d[-4].flagged
    assert not by_d[1].flagged


def test_automatic_tolerance_follows_block_spread():
    params = TruncationParams(epsilon=0.25, lambda_value=3.5)
    tables = VonMangoldtTables(7)
    spread = math.sqrt(LOG2 ** 2 / 4 ** 1.5 + LOG5 ** 2 / 5 ** 1.5 + LOG7 ** 2 / 7 ** 1.5)
    assert consistency_scale(tables, params) == pytest.approx(spread)
    assert FamilyEvaluator(params, tables).tolerance == pytest.approx(CONSISTENCY_SIGMAS * spread)
    fixed = TruncationParams(epsilon=0.25, lambda_value=3.5, consistency_tol=0.3)
    assert FamilyEvaluator(fixed, tables).tolerance == 0.3


def test_sweep_of_ten_at_long_truncation():
    params = TruncationParams(epsilon=0.25, lambda_value=1000.5)
    values = evaluate_family(10, params)
    assert len(values) == 7
    assert not any(v.flagged for v in values)
    # the principal polynomial grows like lambda^(1/4) / (1/4) but is judged without it
    assert values[0].value < -10
    assert abs(values[0].value + principal_main_term(0.75, 1000.5)) < 5.0


def test_stale_cache_flags_are_not_reused(tmp_path):
    path = tmp_path / "sweep.cache"
    loose = TruncationParams(epsilon=0.25, lambda_value=3.5, consistency_tol=10.0, audit_fraction=1.0)
    tight = TruncationParams(epsilon=0.25, lambda_value=3.5, consistency_tol=0.05, audit_fraction=1.0)
    evaluate_family(10, loose, storage=TextSweepStorage(path))
    cached = evaluate_family(10, tight, storage=TextSweepStorage(path))
    fresh = evaluate_family(10, tight)
    assert [v.flagged for v in cached] == [v.flagged for v in fresh]
    assert any(v.flagged for v in cached)


def test_sweep_rejects_tiny_bounds(loose_params):
    with pytest.raises(DomainError):
        evaluate_family(2, loose_params)


def test_sweep_is_thread_independent():
    params = TruncationParams(epsilon=0.2, lambda_value=300.5, audit_fraction=0.05)
    family = enumerate_family(2000)
    one = FamilyEvaluator(params, threads=1).evaluate(family)
    for threads in (4, 8):
        many = FamilyEvaluator(params, threads=threads).evaluate(family)
        assert many == one


def test_sweep_resumes_from_memory(loose_params):
    storage = MemorySweepStorage()
    first = evaluate_family(10, loose_params, storage=storage)
    assert storage.appended == 7
    second = evaluate_family(10, loose_params, storage=storage)
    assert storage.appended == 7
    assert second == first


def test_sweep_resumes_after_interrupted_write(tmp_path, loose_params):
    path = tmp_path / "sweep.cache"
    first = evaluate_family(10, loose_params, storage=TextSweepStorage(path))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n" + lines[-1][:4])

    second = evaluate_family(10, loose_params, storage=TextSweepStorage(path))
    assert second == first
    assert path.read_text().splitlines() == lines


def test_family_moment_keeps_flagged_in_denominator():
    values = [
        LogDerivValue(1, 2.0, 3.5),
        LogDerivValue(-3, -1.0, 3.5),
        LogDerivValue(-4, 100.0, 3.5, flagged=True),
        LogDerivValue(5, 1.0, 3.5),
    ]
    assert family_moment(1, values) == pytest.approx(2.0 / 4)
    assert family_moment(2, values) == pytest.approx(6.0 / 4)
    with pytest.raises(DomainError):
        family_moment(1, [])


@pytest.mark.slow
def test_flagged_share_stays_small():
    bound = 10**5
    values = evaluate_family(bound, TruncationParams.for_bound(bound, 0.25), threads=4)
    assert sum(v.flagged for v in values) / len(values) < 0.01


@pytest.mark.slow
def test_median_audit_gap_shrinks_when_lambda_doubles():
    family = enumerate_family(10**4, include_d1=False)
    medians = []
    for lam in (251.5, 503.5):
        params = TruncationParams(epsilon=0.25, lambda_value=lam, audit_fraction=1.0)
        values = FamilyEvaluator(params, threads=4).evaluate(family)
        medians.append(float(np.median([v.consistency_gap for v in values])))
    assert medians[1] < medians[0]


@pytest.mark.slow
def test_square_of_first_power_splits_into_second_power():
    # (sum_{n <= lambda} a_n)^2 = sum_{m <= lambda} (a * a)(m) + sum over n1, n2 <= lambda with n1 n2 > lambda
    lam = 10**4 + 0.5
    params = TruncationParams(epsilon=0.25, lambda_value=lam)
    tables = VonMangoldtTables(int(lam), k_max=2)
    powers = np.flatnonzero(tables.table(1))
    weights = tables.table(1)[powers] / powers.astype(np.float64) ** params.s
    beyond = np.outer(powers, powers) > params.cutoff
    family = enumerate_family(2000, include_d1=False)
    for d in family.members[:100].tolist():
        chi = np.array([kronecker(d, int(n)) for n in powers], dtype=np.float64)
        signed = chi * weights
        cross = float(np.outer(signed, signed)[beyond].sum())
        first = truncated_logderiv_pow(FundamentalDiscriminant(d), 1, params, tables)
        second = truncated_logderiv_pow(FundamentalDiscriminant(d), 2, params, tables)
        assert first * first == pytest.approx(second + cross, rel=1e-8, abs=1e-8)
        assert power_consistency_gap(FundamentalDiscriminant(d), params, tables) == pytest.approx(abs(cross), rel=1e-8, abs=1e-8)
