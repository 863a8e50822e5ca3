import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate

from weakarma.dist import (QuantileTable, _uk_from_walks, chi2_pvalue, chi2_quantile, load_table,
                           save_table, tabulate_table, tabulate_uk, uk_pvalue)
from weakarma.errors import DomainError, TableFormatError, TableLookupError


def _chi2_pdf(x, df):
    k = df / 2.0
    return math.exp((k - 1) * math.log(x) - x / 2 - k * math.log(2) - math.lgamma(k)) if x > 0 else 0.0


@pytest.mark.parametrize("df,stat", [(1, 3.84), (3, 2.0), (10, 18.3), (24, 30.0)])
def test_chi2_pvalue_matches_numeric_integration(df, stat):
    tail, _ = integrate.quad(_chi2_pdf, stat, np.inf, args=(df,), epsabs=1e-13, epsrel=1e-12)
    assert chi2_pvalue(stat, df) == pytest.approx(tail, rel=1e-8)


def test_chi2_known_quantiles():
    assert chi2_quantile(0.95, 1) == pytest.approx(3.841458820694124, rel=1e-10)
    assert chi2_quantile(0.95, 2) == pytest.approx(-2 * math.log(0.05), rel=1e-12)
    assert chi2_pvalue(0.0, 4) == 1.0


def test_chi2_not_available():
    assert chi2_pvalue(5.0, 0) is None
    assert chi2_quantile(0.95, -2) is None
    with pytest.raises(DomainError):
        chi2_quantile(1.0, 3)
    with pytest.raises(DomainError):
        chi2_pvalue(-1.0, 3)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.integers(1, 200))
def test_chi2_round_trip(prob, df):
    q = chi2_quantile(prob, df)
    assert 1.0 - chi2_pvalue(q, df) == pytest.approx(prob, rel=1e-8, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 500), st.floats(0, 50), st.integers(1, 60))
def test_chi2_pvalue_monotone(a, delta, df):
    assert chi2_pvalue(a + delta, df) <= chi2_pvalue(a, df)


def test_uk_draws_nonnegative_and_sorted(small_table):
    for k in small_table.K_range:
        s = small_table.samples[k]
        assert s.size == 2000
        assert np.all(s >= 0) and np.all(np.diff(s) >= 0)


def test_quantile_monotone_in_probability(small_table):
    qs = [small_table.quantile(4, p) for p in (0.5, 0.9, 0.95, 0.99)]
    assert qs == sorted(qs)
    assert small_table.critical_value(4, 0.05) == small_table.quantile(4, 0.95)


def test_uk_pvalue_midpoint_rule():
    table = QuantileTable({2: np.array([1.0, 2.0, 3.0, 4.0])})
    assert uk_pvalue(table, 2, 2.5) == pytest.approx(2.5 / 5)
    assert uk_pvalue(table, 2, 10.0) == pytest.approx(0.5 / 5)
    assert uk_pvalue(table, 2, 0.0) == pytest.approx(4.5 / 5)
    assert table.pvalue(2, 4.0) == pytest.approx(0.5 / 5)


def test_table_lookup_error(small_table):
    with pytest.raises(TableLookupError):
        small_table.quantile(13, 0.95)


def test_table_round_trip(tmp_path, small_table):
    path = tmp_path / "t.bin"
    save_table(small_table, path)
    back = load_table(path)
    assert back.K_range == small_table.K_range
    assert back.meta == small_table.meta
    for k in back.K_range:
        assert_array_equal(back.samples[k], small_table.samples[k])


def test_table_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\0" * 60)
    with pytest.raises(TableFormatError):
        load_table(path)


@pytest.mark.parametrize("cut", [10, 50, 100])
def test_table_truncated(tmp_path, cut):
    good = tmp_path / "good.bin"
    QuantileTable({1: np.arange(20.0)}, {"R": 20, "n_steps": 100, "seed": 1, "resamples": 0}).save(good)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(good.read_bytes()[:cut])
    with pytest.raises(TableFormatError):
        load_table(bad)


def test_tabulate_validation():
    with pytest.raises(DomainError):
        tabulate_table([0], R=1000, n_steps=100)
    with pytest.raises(DomainError):
        tabulate_table([1], R=10, n_steps=100)


def test_k_values_share_draws():
    a = tabulate_table([1, 3], R=1000, n_steps=200, seed=5)
    b = tabulate_table([1], R=1000, n_steps=200, seed=5)
    # Same walks; only the BLAS summation order differs with K_max.
    assert_allclose(a.samples[1], b.samples[1], rtol=1e-10)
    assert_array_equal(tabulate_uk(3, R=1000, n_steps=200, seed=5), a.samples[3])


def test_smaller_r_is_prefix():
    small = tabulate_uk(2, R=1000, n_steps=150, seed=9, chunk=500)
    large = tabulate_uk(2, R=2000, n_steps=150, seed=9, chunk=500)
    assert np.all(np.isin(small, large))


def test_threads_do_not_change_draws():
    a = tabulate_uk(2, R=2000, n_steps=150, seed=3, chunk=500, threads=1)
    b = tabulate_uk(2, R=2000, n_steps=150, seed=3, chunk=500, threads=4)
    assert_array_equal(a, b)


def test_uk_single_draw_formula():
    # Direct left-point evaluation of the bridge integral for one K=2 draw.
    gen = np.random.default_rng(0)
    n = 50
    w = np.cumsum(gen.standard_normal((2, n)), axis=1)
    b1 = w[:, -1] / np.sqrt(n)
    v = np.zeros((2, 2))
    for i in range(1, n):
        br = w[:, i - 1] / np.sqrt(n) - (i / n) * b1
        v += np.outer(br, br) / n
    expected = b1 @ np.linalg.solve(v, b1)
    vals, bad = _uk_from_walks(w[None], [2])
    assert not bad[2][0]
    assert vals[2][0] == pytest.approx(expected, rel=1e-10)


def test_uk_scale_invariant_in_walk():
    w = np.cumsum(np.random.default_rng(1).standard_normal((5, 3, 100)), axis=2)
    a, _ = _uk_from_walks(w, [3])
    b, _ = _uk_from_walks(7.5 * w, [3])
    assert_allclose(a[3], b[3], rtol=1e-10)


def test_mean_and_quantile_increase_with_k(full_table):
    means = [full_table.samples[k].mean() for k in range(1, 9)]
    assert all(b > a for a, b in zip(means, means[1:]))
    q = [full_table.quantile(k, 0.95) for k in full_table.K_range]
    assert all(b > a for a, b in zip(q, q[1:]))


def test_grid_refinement_changes_quantile_little():
    # Common random numbers: the coarse walk is every 4th point of the fine one.
    gen = np.random.default_rng(2024)
    quant = {1: ([], []), 3: ([], [])}
    for _ in range(10):
        fine = np.cumsum(gen.standard_normal((1000, 3, 4000)), axis=2)
        coarse = fine[:, :, 3::4]
        vf, _ = _uk_from_walks(fine, [1, 3])
        vc, _ = _uk_from_walks(coarse, [1, 3])
        for k in (1, 3):
            quant[k][0].append(vf[k])
            quant[k][1].append(vc[k])
    for k, (vf, vc) in quant.items():
        qf = np.nanquantile(np.concatenate(vf), 0.95)
        qc = np.nanquantile(np.concatenate(vc), 0.95)
        assert abs(qc / qf - 1) < 0.03, (k, qf, qc)
