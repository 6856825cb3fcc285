import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdmcfan import ChainParams, Potential, RngStream, StepDistribution, walk_path, weighted_mc_estimate
from tdmcfan.chain import euler_step, exact_mean_weight, sample_step

KINDS = ["standard-normal", "rademacher", "centered-uniform", "two-sided-exponential-normalized"]


def test_sample_step_supports():
    r = RngStream(1)
    assert {sample_step(StepDistribution("rademacher"), r) for _ in range(50)} <= {-1.0, 1.0}
    u = [sample_step(StepDistribution("centered-uniform"), r) for _ in range(200)]
    assert max(abs(x) for x in u) <= math.sqrt(3)


@pytest.mark.parametrize("kind", KINDS)
def test_unit_variance(kind):
    d = StepDistribution(kind)
    x = d.from_uniforms(RngStream(2).random(10**6), RngStream(3).random(10**6))
    se = x.std() * math.sqrt(2.0 / x.size) * max(1.0, math.sqrt(np.mean(x**4) - 1) / math.sqrt(2))
    assert abs(x.mean()) < 5 / math.sqrt(x.size)
    assert abs(x.var() - 1.0) < 5 * se
    if kind == "standard-normal":
        assert abs(x.var() - 1.0) < 0.005


def test_walk_path_examples():
    assert walk_path(0.0, ChainParams(0.01), 0, StepDistribution(), RngStream(1)).tolist() == [0.0]
    p = walk_path(0.0, ChainParams(1.0), 50, StepDistribution("rademacher"), RngStream(1))
    assert set(np.diff(p).tolist()) <= {-1.0, 1.0}
    ends = np.array([walk_path(0.0, ChainParams(0.01), 100, StepDistribution(), RngStream(9, (i,)))[-1]
                     for i in range(3000)])
    assert abs(ends.var() - 1.0) < 5 * math.sqrt(2 / ends.size)


def test_walk_path_seeded_determinism():
    a = walk_path(0.3, ChainParams(0.01), 200, StepDistribution(), RngStream(5))
    b = walk_path(0.3, ChainParams(0.01), 200, StepDistribution(), RngStream(5))
    assert np.array_equal(a, b)


def test_euler_step_examples():
    assert float(euler_step(1.0, ChainParams(0.1, drift=lambda y: -y, diffusion=lambda y: 0.0), None, xi=0.3)) \
        == pytest.approx(0.9)
    assert float(euler_step(2.0, ChainParams(0.25, diffusion=lambda y: 2.0), None, xi=1.0)) == pytest.approx(3.0)
    assert float(euler_step(2.0, ChainParams(0.25), None, xi=1.0)) == pytest.approx(2.5)


def test_n_steps_rejects_non_multiple():
    with pytest.raises(ValueError):
        ChainParams(0.01).n_steps(0.505)
    with pytest.raises(ValueError):
        ChainParams(0.0)


@given(st.floats(0.0, 3.0), st.lists(st.floats(-5, 5), min_size=1, max_size=60), st.floats(-2, 2))
def test_telescoping(a, steps, y0):
    pot = Potential.linear(a)
    path = y0 + np.concatenate([[0.0], np.cumsum(steps)])
    prod = math.exp(-sum(pot.chi(x, y) for x, y in zip(path[:-1], path[1:])))
    assert prod == pytest.approx(math.exp(a * (path[-1] - path[0])), rel=1e-10)


def test_weighted_mc_examples():
    p = ChainParams(0.01)
    m, se = weighted_mc_estimate(lambda x: 1.0, 0.5, 1000, Potential.zero(), p, StepDistribution(), RngStream(1))
    assert m == 1.0 and se == 0.0
    m, se = weighted_mc_estimate(lambda x: x, 0.5, 20000, Potential.zero(), p, StepDistribution(), RngStream(1))
    assert abs(m) < 3 * se + 1e-12
    m, se = weighted_mc_estimate(lambda x: 1.0, 0.5, 10**6, Potential.linear(1.0), p, StepDistribution(),
                                 RngStream(2))
    exact = exact_mean_weight(StepDistribution(), 1.0, 0.01, 50)
    assert exact == pytest.approx(math.exp(0.25))
    assert abs(m - exact) < 3 * se
    with pytest.raises(ValueError):
        weighted_mc_estimate(lambda x: 1.0, 0.505, 10, Potential.zero(), p, StepDistribution(), RngStream(1))


@pytest.mark.parametrize("kind", KINDS)
def test_mgf_matches_quadrature(kind):
    d = StepDistribution(kind)
    assert d.mgf(0.3) == pytest.approx(d.expect(lambda z: math.exp(0.3 * z)), rel=1e-8)
    assert float(d.tail(0.0)) == pytest.approx(0.5)
