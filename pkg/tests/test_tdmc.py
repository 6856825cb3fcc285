import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import BACKENDS
from tdmcfan import ChainParams, Potential, RngStream, StepDistribution
from tdmcfan.chain import exact_mean_weight
from tdmcfan.tdmc import (Ensemble, PopulationExplosion, branch_decision, moment_table, offspring_rate_experiment,
                          run_estimator, run_tdmc, spawn_tickets, tdmc_step)

NORMAL = StepDistribution()


def test_branch_decision_examples():
    assert branch_decision(0.5, 0.7, 0.9) == (False, 0)
    assert branch_decision(math.e, 0.3, 0.5) == (True, 3)
    with pytest.raises(ValueError):
        branch_decision(0.0, 0.5, 0.5)


def test_branch_mean_offspring_monte_carlo():
    g = np.random.default_rng(0)
    th, u = g.random(10**6), g.random(10**6)
    n = np.where(th <= 0.5, np.maximum(np.floor(0.5 + u), 1), 0)
    assert abs(n.mean() - 0.5) < 3 * n.std() / 1e3


@pytest.mark.parametrize("P", [0.3, 1.0, 1.7, 2.5])
def test_branch_mean_offspring_grid(P):
    # midpoints of a 1000 x 1000 grid on the (theta, u) square
    c = (np.arange(1000) + 0.5) / 1000
    total = sum(branch_decision(P, th, 0.0)[0] * np.maximum(np.floor(P + c), 1).mean() for th in c)
    assert abs(total / 1000 - P) <= 2e-3


def test_spawn_tickets_examples(rng):
    assert spawn_tickets(2.0, 0.5, 1, rng) == [0.25]
    t = spawn_tickets(2.0, 0.5, 5, rng)
    assert t[0] == 0.25 and all(0.5 < x < 1 for x in t[1:])
    draws = np.array([spawn_tickets(2.0, 0.5, 3, RngStream(1, (i,)))[1] for i in range(20000)])
    assert abs(draws.mean() - 0.75) < 3 * draws.std() / math.sqrt(draws.size)
    with pytest.raises(ValueError):
        spawn_tickets(2.0, 0.5, 0, rng)
    with pytest.raises(ValueError):
        spawn_tickets(0.9, 0.5, 2, rng)


@given(st.floats(0.01, 5.0), st.floats(1e-6, 1.0), st.floats(0.0, 0.999999))
def test_tickets_stay_in_unit_interval(P, theta, u):
    ok, n = branch_decision(P, theta, u)
    if ok:
        t = spawn_tickets(P, theta, n, RngStream(int(P * 1e6)))
        assert len(t) == n and all(0 < x <= 1 for x in t)


def test_step_invariants_and_tickets():
    ens = Ensemble.initial(0.0, 300, RngStream(4), 0.01)
    pot, p = Potential.linear(1.0), ChainParams(0.01)
    for k in range(50):
        nxt = tdmc_step(ens, pot, p, NORMAL)
        assert nxt.N == nxt.x.size and nxt.time == pytest.approx(ens.time + 0.01)
        assert np.all((nxt.theta > 0) & (nxt.theta <= 1))
        ens = nxt
    assert ens.gen.max() >= 1


def test_tags_constant_over_life():
    pot, p = Potential.linear(1.0), ChainParams(0.01)
    ens = Ensemble.initial(0.0, 50, RngStream(6), 0.01)
    tags0 = dict(zip(ens.key.tolist(), ens.tags(pot)))
    nxt = tdmc_step(ens, pot, p, NORMAL)
    for k, v, g in zip(nxt.key.tolist(), nxt.tags(pot), nxt.gen):
        if k in tags0:
            assert v == pytest.approx(tags0[k], abs=1e-9)


def test_explosion_guard():
    with pytest.raises(PopulationExplosion):
        run_tdmc(1.0, 2, Potential.linear(20.0), ChainParams(0.01), NORMAL, RngStream(1), cap=50, backend="numpy")
    if "numba" in BACKENDS:
        with pytest.raises(PopulationExplosion):
            run_tdmc(1.0, 2, Potential.linear(20.0), ChainParams(0.01), NORMAL, RngStream(1), cap=50,
                     backend="numba")


def _canon(ens):
    o = np.lexsort((ens.key, ens.owner))
    return [a[o] for a in (ens.x, ens.theta, ens.gen, ens.owner)]


@pytest.mark.parametrize("theta0", ["uniform", "immortal"])
def test_backends_identical(theta0):
    if len(BACKENDS) < 2:
        pytest.skip("numba unavailable")
    args = (0.5, 200, Potential.linear(1.0), ChainParams(0.01), NORMAL, RngStream(8))
    a = run_tdmc(*args, theta0=theta0, snap_times=[0.25, 0.5], backend="numba")
    b = run_tdmc(*args, theta0=theta0, snap_times=[0.25, 0.5], backend="numpy")
    for sa, sb in zip(a.snapshots, b.snapshots):
        for xa, xb in zip(_canon(sa), _canon(sb)):
            np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=0)
    assert np.array_equal(a.births, b.births) and np.array_equal(a.deaths, b.deaths)
    assert np.array_equal(a.work, b.work)


def test_trace_hook_sees_every_step():
    seen = []
    run_tdmc(0.1, 10, Potential.linear(1.0), ChainParams(0.01), NORMAL, RngStream(2), trace=lambda e: seen.append(e.step))
    assert seen == list(range(1, 11))


def test_mean_count_identity():
    # E N_t = E exp(a y_t) with uniform initial tickets
    run = run_tdmc(0.5, 20000, Potential.linear(1.0), ChainParams(0.01), NORMAL, RngStream(21))
    c = run.counts()
    exact = exact_mean_weight(NORMAL, 1.0, 0.01, 50)
    assert abs(c.mean() - exact) < 3 * c.std(ddof=1) / math.sqrt(c.size)


@pytest.mark.parametrize("kind", ["rademacher", "centered-uniform"])
def test_unbiased_small(kind):
    from tdmcfan import weighted_mc_estimate
    d = StepDistribution(kind)
    est, se, _ = run_estimator(lambda x: x, 0.5, 2000, Potential.linear(1.0), ChainParams(0.01), d, RngStream(3),
                               replicas=10)
    ref, rse = weighted_mc_estimate(lambda x: x, 0.5, 200000, Potential.linear(1.0), ChainParams(0.01), d,
                                    RngStream(4))
    assert abs(est - ref) < 3 * math.hypot(se, rse)


def test_rate_backends_identical_and_guards():
    kw = dict(a=1.0, gamma=0.5, T=0.2, eps=1e-3, dist=NORMAL, replicas=30)
    r = [offspring_rate_experiment(rng=RngStream(5), backend=b, **kw) for b in BACKENDS]
    for other in r[1:]:
        assert np.array_equal(r[0][2], other[2])
    with pytest.raises(ValueError):
        offspring_rate_experiment(1.0, 0.5, 1.0, 0.1, NORMAL, 5, RngStream(1))
    with pytest.raises(ValueError):
        offspring_rate_experiment(1.0, 2.0, 1.0, 1e-3, NORMAL, 5, RngStream(1))


def test_moment_table():
    m = moment_table([1, 2, 3, 4], p_max=2)
    assert m[0][0] == 2.5 and m[1][0] == 7.5
