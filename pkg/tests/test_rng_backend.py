import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdmcfan import _backend
from tdmcfan._rng import (RngStream, child_key, child_key_nb, counter, counter_nb, key_from, keys_for, uniform,
                          uniform_nb)

u64 = st.integers(min_value=0, max_value=2**64 - 1)


@given(u64, st.integers(0, 2**31), st.integers(0, 2**31))
def test_uniform_in_unit_interval_and_twins_agree(key, step, slot):
    k = np.uint64(key)
    c = counter(np.uint64(step), np.uint64(slot))
    u = float(uniform(k, c))
    assert 0.0 <= u < 1.0
    assert int(c) == int(counter_nb(np.uint64(step), np.uint64(slot)))
    assert u == uniform_nb(k, c)
    assert int(child_key(k, np.uint64(step), np.uint64(slot))) == int(child_key_nb(k, np.uint64(step), np.uint64(slot)))


def test_stream_is_deterministic_and_children_differ():
    a, b = RngStream(7), RngStream(7)
    assert np.array_equal(a.random(100), b.random(100))
    assert RngStream(7).child(1).key != RngStream(7).child(2).key
    assert key_from(7, 1, 2) != key_from(7, 2, 1)


def test_uniforms_look_uniform():
    from scipy import stats
    u = RngStream(3).random(20000)
    assert stats.kstest(u, "uniform").pvalue > 1e-3


def test_keys_for_distinct():
    keys = keys_for(RngStream(1).key, 10000)
    assert np.unique(keys).size == keys.size


def test_backend_flag(monkeypatch):
    monkeypatch.setenv("TDMCFAN_BACKEND", "numpy")
    assert _backend.default_backend() == "numpy"
    monkeypatch.setenv("TDMCFAN_BACKEND", "bogus")
    with pytest.raises(ValueError):
        _backend.default_backend()
    with pytest.raises(ValueError):
        _backend.resolve("fortran")
