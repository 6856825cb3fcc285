import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdmcfan.lpspace import (DELTA, PointMeasure, TaggedPoint, dist_to_boundary, dp, interpolate, lp_distance,
                             optimal_matching)

A = 1.0


def brute(mu, nu, p, a):
    xs = mu.points + [DELTA] * max(0, nu.count - mu.count)
    ys = nu.points + [DELTA] * max(0, mu.count - nu.count)
    if not xs:
        return 0.0
    return min(sum(dp(x, y, p, a) for x, y in zip(xs, perm)) for perm in itertools.permutations(ys))


@st.composite
def measures(draw, max_size=4, a=A):
    k = draw(st.integers(0, max_size))
    x = draw(st.lists(st.floats(-2, 2), min_size=k, max_size=k))
    gap = draw(st.lists(st.floats(0.01, 3), min_size=k, max_size=k))
    n = draw(st.lists(st.integers(0, 2), min_size=k, max_size=k))
    return PointMeasure(x, [-a * xi + g for xi, g in zip(x, gap)], n, a=a)


ps = st.sampled_from([0.25, 0.5, 1.0])


def test_boundary_examples():
    assert dist_to_boundary(TaggedPoint(1.0, -1.0), 1.0) == pytest.approx(0.0)
    assert dist_to_boundary(TaggedPoint(0.0, 1.0), 1.0) == pytest.approx(1 / math.sqrt(2))
    assert dist_to_boundary(TaggedPoint(5.0, 0.3), 0.0) == pytest.approx(0.3)
    assert dist_to_boundary(DELTA, 1.0) == 0.0
    assert dist_to_boundary(TaggedPoint(0.0, 1.0), 2.0, form="barrier") == pytest.approx(0.5)


def test_dp_examples():
    X = TaggedPoint(0.0, 1.0, 0)
    assert dp(X, X, 0.5, 1.0) == 0.0
    assert dp(X, DELTA, 0.5, 1.0) == pytest.approx(dist_to_boundary(X, 1.0) ** 0.5)
    assert dp(X, TaggedPoint(0.0, 1.0, 1), 1.0, 1.0) == pytest.approx(math.sqrt(2))


def test_membership_enforced():
    with pytest.raises(ValueError):
        PointMeasure([1.0], [-1.0], [0], a=1.0)
    with pytest.raises(ValueError):
        PointMeasure([1.0], [0.0], [0], p=1.5)


@given(measures(), measures(), ps)
def test_assignment_equals_brute_force(mu, nu, p):
    if mu.count + nu.count <= 7:
        assert lp_distance(mu, nu, p, A) == pytest.approx(brute(mu, nu, p, A), abs=1e-12)


@given(measures(max_size=3), measures(max_size=3), measures(max_size=3), ps)
def test_metric_axioms(mu, nu, rho, p):
    d = lambda m, n: lp_distance(m, n, p, A)  # noqa: E731
    assert d(mu, nu) == d(nu, mu)
    assert d(mu, mu) == 0.0
    assert d(mu, rho) <= d(mu, nu) + d(nu, rho) + 1e-9


@given(measures(), ps)
def test_norm_consistency(mu, p):
    expected = float(np.sum(mu.boundary_distances() ** p))
    assert lp_distance(mu, PointMeasure.empty(A, p), p, A) == pytest.approx(expected, abs=1e-12)


@given(measures(max_size=3), measures(max_size=3), ps, st.floats(0, 1), st.floats(0, 1))
def test_interpolation_bound(mu, nu, p, s, t):
    d = lp_distance(mu, nu, p, A)
    Ls, Lt = interpolate(mu, nu, s, p, A), interpolate(mu, nu, t, p, A)
    assert lp_distance(Ls, Lt, p, A) <= abs(t - s) ** p * d + 1e-9


@given(measures(), measures(), ps)
def test_interpolation_endpoints(mu, nu, p):
    assert lp_distance(interpolate(mu, nu, 0.0, p, A), mu, p, A) == pytest.approx(0.0, abs=1e-9)
    assert lp_distance(interpolate(mu, nu, 1.0, p, A), nu, p, A) == pytest.approx(0.0, abs=1e-9)


def test_midpoint_of_single_points():
    mu = PointMeasure([0.0], [1.0], [0])
    nu = PointMeasure([0.2], [1.2], [0])
    mid = interpolate(mu, nu, 0.5)
    assert mid.x.tolist() == pytest.approx([0.1]) and mid.v.tolist() == pytest.approx([1.1])


def test_ties_broken_lexicographically():
    # two identical points matched to two identical targets: identity permutation
    mu = PointMeasure([0.0, 0.0], [1.0, 1.0], [0, 0])
    nu = PointMeasure([0.1, 0.1], [1.0, 1.0], [0, 0])
    sigma, _ = optimal_matching(mu, nu)
    assert sigma.tolist() == [0, 1]


def test_csv_roundtrip(tmp_path):
    mu = PointMeasure([0.1, 1 / 3], [1.0, 2.0], [0, 2])
    mu.to_csv(tmp_path / "m.csv")
    back = PointMeasure.from_csv(tmp_path / "m.csv")
    assert back.x.tolist() == mu.x.tolist() and back.n.tolist() == mu.n.tolist()
