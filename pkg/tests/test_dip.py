import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dip_lp
from postclust.clustering import Partition
from postclust.dataset import DataMatrix
from postclust.dip import dip_p_value, dip_statistic, dip_test_between, p_from_null, uniform_dips


def test_two_points():
    assert dip_statistic([0.0, 1.0]).dip == pytest.approx(0.25, abs=1e-12)
    assert dip_statistic([-3.0, 17.0]).dip == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize("n", range(2, 9))
def test_grid_gives_half_over_n(n):
    grid = np.arange(n, dtype=float)
    assert dip_statistic(grid).dip == pytest.approx(1 / (2 * n), abs=1e-12)
    assert dip_lp(grid) == pytest.approx(1 / (2 * n), abs=1e-9)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_two_point_masses(k):
    x = [0.0] * k + [1.0] * k
    d = dip_statistic(x).dip
    assert d == pytest.approx(dip_lp(x), abs=1e-9)
    assert d <= 0.25


def test_two_point_masses_stay_at_quarter():
    for k in (5, 50, 500):
        assert dip_statistic([0.0] * k + [1.0] * k).dip == pytest.approx(0.25, abs=1e-12)


def test_constant_sample_has_zero_dip():
    assert dip_statistic([2.0, 2.0, 2.0]).dip == 0.0


def test_errors():
    with pytest.raises(ValueError):
        dip_statistic([1.0])
    with pytest.raises(ValueError):
        dip_statistic([0.0, np.nan])
    with pytest.raises(ValueError):
        dip_p_value(-0.1, 10, B=5, rng=0)


def test_unsorted_input_is_sorted():
    x = np.random.default_rng(0).normal(size=30)
    assert dip_statistic(x).dip == dip_statistic(np.sort(x)).dip


def test_modal_interval_indices():
    res = dip_statistic(np.random.default_rng(1).normal(size=50))
    lo, hi = res.modal_interval
    assert 0 <= lo <= hi < res.n


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-800, 800).map(lambda v: v / 8), min_size=2, max_size=8))
def test_matches_lp_oracle(xs):
    # lattice values keep the LP oracle well conditioned (its slopes scale with 1/gap)
    assert dip_statistic(xs).dip == pytest.approx(dip_lp(xs), abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100), st.floats(-50, 50))
def test_affine_invariance(seed, a, b):
    x = np.random.default_rng(seed).normal(size=40)
    x = np.round(x, 3)  # includes ties
    assert dip_statistic(a * x + b).dip == pytest.approx(dip_statistic(x).dip, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bounds(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 60))
    d = dip_statistic(rng.normal(size=n)).dip
    assert 1 / (2 * n) - 1e-12 <= d <= 0.25 + 1e-12


def test_p_value_edges():
    assert dip_p_value(0.0, 20, B=50, rng=0) == 1.0
    assert dip_p_value(0.3, 20, B=50, rng=0) == 1 / 51
    assert p_from_null(0.1, [0.05, 0.1, 0.2]) == 3 / 4


def test_p_value_monotone():
    null = uniform_dips(30, 300, rng=3)
    grid = np.linspace(0, 0.3, 61)
    ps = [p_from_null(d, null) for d in grid]
    assert all(a >= b for a, b in zip(ps, ps[1:]))
    assert all(0 < p <= 1 for p in ps)


def test_p_value_seeded():
    assert dip_p_value(0.05, 40, B=200, rng=9) == dip_p_value(0.05, 40, B=200, rng=9)


def test_bimodal_sample_significant():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(0, 1, 100), rng.normal(8, 1, 100)])
    res = dip_statistic(x)
    assert dip_p_value(res.dip, res.n, B=500, rng=1) < 0.01


def test_gaussian_is_conservative():
    rng = np.random.default_rng(2)
    ps = []
    for _ in range(40):
        res = dip_statistic(rng.normal(size=200))
        ps.append(dip_p_value(res.dip, 200, B=200, rng=rng))
    assert np.mean(np.asarray(ps) <= 0.05) <= 0.05
    assert np.median(ps) > 0.5


def test_between_restricts_rows():
    x = np.array([0.0, 0.1, 5.0, 5.2, 20.0, 20.3, 10.0, 10.1])
    part = Partition.from_labels([1, 1, 2, 2, 3, 3, 4, 4])
    m = DataMatrix(x[:, None], ["a"])
    res = dip_test_between(m, 0, part, 1, 2, B=50, rng=0)
    assert res.details["n"] == 4
    assert res.details["between_set"] == [1, 2]
    assert res.statistic == dip_statistic(x[:4]).dip
    full = dip_test_between(m, 0, part, 1, 3, B=50, rng=0)
    assert full.details["n"] == 8
    assert full.method == "dip"
    assert full.sigma_sq is None


def test_between_same_sample_same_p():
    # different partitions whose between-sets cover the same rows give identical results
    x = np.random.default_rng(4).normal(size=30)
    m = DataMatrix(x[:, None], ["a"])
    order = np.argsort(x)
    two = np.empty(30, dtype=int)
    two[order[:15]], two[order[15:]] = 1, 2
    four = np.empty(30, dtype=int)
    for c, chunk in enumerate(np.array_split(order, 4)):
        four[chunk] = c + 1
    a = dip_test_between(m, 0, Partition.from_labels(two), 1, 2, B=100, rng=5)
    p4 = Partition.from_labels(four)
    lo, hi = p4.labels[order[0]], p4.labels[order[-1]]
    b = dip_test_between(m, 0, p4, int(lo), int(hi), B=100, rng=5)
    assert a.p == b.p and a.statistic == b.statistic
