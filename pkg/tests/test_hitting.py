import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import BACKENDS
from tdmcfan import RngStream, StepDistribution
from tdmcfan.hitting import (GGrid, HittingQuery, StepCapExceeded, check_half_identity, check_renewal,
                             compute_G_grid, conditioned_excursion_sample, conditioned_excursion_stats,
                             corridor_batch, estimate_G, hit_prob_exact_rademacher, hit_prob_mc, rademacher_G)

RAD = StepDistribution("rademacher")
NORMAL = StepDistribution()


def test_exact_examples():
    assert hit_prob_exact_rademacher(1, 5) == pytest.approx(1 / 6, abs=1e-14)
    assert hit_prob_exact_rademacher(0.5, 5) == pytest.approx(1 / 6, abs=1e-14)
    assert hit_prob_exact_rademacher(2.5, 7) == pytest.approx(3 / 10, abs=1e-14)
    with pytest.raises(ValueError):
        hit_prob_exact_rademacher(1, 2.5)


@given(st.floats(0.0, 30.0), st.integers(1, 40))
def test_exact_solve_matches_closed_form(s, gamma):
    c = math.ceil(s)
    if c == 0:
        # the first downward step kills; from +1 it is ruin with depth 1 and target gamma - 1
        expected = 0.5 * (1.0 if gamma == 1 else 1.0 / gamma)
    else:
        expected = c / (c + gamma)
    assert hit_prob_exact_rademacher(s, gamma) == pytest.approx(expected, abs=1e-12)


def test_mc_examples():
    p, se = hit_prob_mc(HittingQuery(1, 5, RAD), 40000, RngStream(1))
    assert abs(p - 1 / 6) < 3 * se
    p, se = hit_prob_mc(HittingQuery(20, 100, NORMAL), 2000, RngStream(2))
    assert abs(p - 1 / 6) < 3 * se + 0.02
    # expected total work is s * gamma * samples = 1e8 steps, above the default cap
    p, _ = hit_prob_mc(HittingQuery(1, 1e4, NORMAL), 10000, RngStream(3), step_cap=10**9)
    assert p < 0.01
    with pytest.raises(ValueError):
        hit_prob_mc(HittingQuery(1, 5, RAD), 10, RngStream(1))
    with pytest.raises(ValueError):
        HittingQuery(-1, 5)


def test_step_cap():
    with pytest.raises(StepCapExceeded):
        hit_prob_mc(HittingQuery(50, 50, NORMAL), 1000, RngStream(4), step_cap=1000)


def test_corridor_backends_identical():
    if len(BACKENDS) < 2:
        pytest.skip("numba unavailable")
    a = corridor_batch(8.0, 3.0, NORMAL, 5000, RngStream(5), backend="numba")
    b = corridor_batch(8.0, 3.0, NORMAL, 5000, RngStream(5), backend="numpy")
    assert np.array_equal(a.hit, b.hit)
    np.testing.assert_allclose(a.low, b.low, rtol=1e-12)
    assert a.steps == b.steps


def test_G_rademacher_and_linear_growth():
    est = estimate_G(2.5, RAD, [8, 16, 32], 100_000, RngStream(6))
    assert abs(est.G - 3.0) <= 0.1
    assert rademacher_G(0.0) == 0.5 and rademacher_G(2.5) == 3.0
    for d in (NORMAL, RAD):
        est = estimate_G(50, d, [50, 100, 200], 4000, RngStream(7))
        assert 0.9 <= est.G / 50 <= 1.1


def test_cauchy_along_schedule():
    est = estimate_G(1.0, NORMAL, [4, 8, 16, 32], 40000, RngStream(8))
    d = np.abs(est.differences)
    se = np.hypot(est.scaled_stderr[1:], est.scaled_stderr[:-1])
    assert np.all(d[1:] <= d[:-1] + 3 * (se[1:] + se[:-1]))


def test_renewal_rademacher_exact_grid():
    s = np.round(np.arange(0, 8.05, 0.5), 12)
    grid = GGrid(s, rademacher_G(s).astype(float), np.zeros(s.size), math.inf, 0.0, "rademacher")
    assert check_renewal(1.5, RAD, 0, None, grid=grid) == pytest.approx(0.0, abs=1e-12)
    assert check_renewal(0.5, RAD, 0, None, grid=grid) == pytest.approx(0.0, abs=1e-12)


def test_renewal_normal(tmp_path):
    grid = compute_G_grid(NORMAL, RngStream(9), gamma=32.0, s_max=8.0, ds=0.1, samples=100_000)
    grid.to_csv(tmp_path / "g.csv")
    back = GGrid.from_csv(tmp_path / "g.csv", gamma=32.0)
    np.testing.assert_array_equal(back.G, grid.G)
    for s in (0.5, 1.0, 2.0):
        r, se = check_renewal(s, NORMAL, 0, None, grid=grid, return_stderr=True)
        assert r < 3 * se + 0.05


def test_half_identity_rademacher_exact():
    v, se = check_half_identity(RAD, np.linspace(0, 8, 81), 0, None)
    assert v == pytest.approx(0.5, abs=1e-6) and se == 0.0


def test_conditioned_sample_reaches_gamma():
    for i in range(5):
        w = conditioned_excursion_sample(1.0, 0.3, 1e-3, NORMAL, RngStream(10, (i,)), horizon=2.0)
        assert w.values.max() >= 0.3


def test_conditioned_stats_backends_identical():
    if len(BACKENDS) < 2:
        pytest.skip("numba unavailable")
    a = conditioned_excursion_stats(1.0, 0.5, 1e-3, NORMAL, 100, RngStream(11), backend="numba")
    b = conditioned_excursion_stats(1.0, 0.5, 1e-3, NORMAL, 100, RngStream(11), backend="numpy")
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-12)
