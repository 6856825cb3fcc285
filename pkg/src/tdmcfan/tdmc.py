"""Ticketed DMC: branching with tickets, killing, offspring tickets and the
unbiased estimator.

Every particle owns a 64-bit stream key. At step ``k`` it reads slots 0-1 of
``(key, k)`` for its increment, slot 2 for the branching uniform and slots
``2 + i`` for the tickets of its ``i``-th new offspring, whose key is
``child_key(key, k, i)``. The continuing particle keeps its key.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend
from ._backend import njit
from ._rng import (RngStream, child_key, child_key_nb, counter, counter_nb, keys_for, uniform,
                   uniform_nb)
from .chain import ChainParams, Potential, StepDistribution, from_uniforms_nb

DEFAULT_CAP = 10**7
# reserved step index for the initial ticket draw
_THETA_STEP = np.uint64(0xFFFFFFFF)


class PopulationExplosion(RuntimeError):
    """Raised when the descendants of one initial copy exceed the particle cap."""


@dataclass
class Particle:
    x: float
    theta: float
    n: int
    birth_time: float
    lineage: int

    def tag(self, potential: Potential):
        """v with exp(-v) = theta exp(-V(x)); constant over the particle's life."""
        return -math.log(self.theta) + float(potential.V(self.x)) if self.theta > 0 else math.inf


@dataclass
class Ensemble:
    x: np.ndarray
    theta: np.ndarray
    gen: np.ndarray
    birth: np.ndarray
    key: np.ndarray
    owner: np.ndarray
    step: int = 0
    eps: float = 1.0
    births: int = 0
    deaths: int = 0
    work: int = 0

    @property
    def N(self):
        return int(self.x.shape[0])

    @property
    def time(self):
        return self.step * self.eps

    @classmethod
    def initial(cls, x0, M, rng: RngStream, eps, theta0="uniform"):
        """M copies at ``x0``. ``theta0`` is "uniform", "immortal" (ticket 0) or a number."""
        keys = keys_for(rng.key, M)
        if isinstance(theta0, str):
            if theta0 == "uniform":
                with np.errstate(over="ignore"):
                    th = uniform(keys, counter(_THETA_STEP, np.uint64(0)))
            elif theta0 == "immortal":
                th = np.zeros(M)
            else:
                raise ValueError(f"theta0 must be 'uniform', 'immortal' or a number, got {theta0!r}")
        else:
            th = np.broadcast_to(np.asarray(theta0, dtype=float), (M,)).copy()
            if np.any((th <= 0) | (th > 1)):
                raise ValueError("initial tickets must lie in (0, 1]")
        return cls(x=np.full(M, float(x0)), theta=th, gen=np.zeros(M, np.int64), birth=np.zeros(M),
                   key=keys, owner=np.arange(M, dtype=np.int64), eps=float(eps))

    def particles(self):
        return [Particle(float(x), float(t), int(g), float(b), int(k))
                for x, t, g, b, k in zip(self.x, self.theta, self.gen, self.birth, self.key)]

    def tags(self, potential: Potential):
        with np.errstate(divide="ignore"):
            return -np.log(self.theta) + potential.V(self.x)

    def generation_counts(self, n_max):
        return np.bincount(self.gen, minlength=n_max + 1)[: n_max + 1]

    def counts_by_owner(self, M):
        return np.bincount(self.owner, minlength=M)


def branch_decision(P, theta, u):
    """Survival flag and offspring count (continuing particle included)."""
    if not P > 0:
        raise ValueError(f"P must be > 0, got {P}")
    if P < theta:
        return False, 0
    return True, max(int(math.floor(P + u)), 1)


def spawn_tickets(P, theta, n_off, rng: RngStream):
    if n_off < 1:
        raise ValueError("n_off must be >= 1")
    if P < theta:
        raise ValueError("particle was killed (P < theta)")
    if n_off >= 2 and P <= 1.0:
        raise ValueError("unreachable: two or more offspring require P > 1")
    lo = 1.0 / P
    tickets = [theta / P]
    if n_off > 1:
        tickets.extend((lo + (1.0 - lo) * rng.random(n_off - 1)).tolist())
    return tickets


def tdmc_step(ens: Ensemble, potential: Potential, params: ChainParams, dist: StepDistribution,
              rng: RngStream = None, cap=DEFAULT_CAP):
    """Advance every particle one step and apply kill/branch; returns a new Ensemble.

    Draws come from each particle's own key, so ``rng`` is accepted for
    interface symmetry and not consumed.
    """
    k = np.uint64(ens.step)
    key = ens.key
    with np.errstate(over="ignore"):
        u1 = uniform(key, counter(k, np.uint64(0)))
        u2 = uniform(key, counter(k, np.uint64(1)))
        ub = uniform(key, counter(k, np.uint64(2)))
    xi = dist.from_uniforms(u1, u2)
    x_new = params.update(ens.x, xi)
    P = np.exp(-potential.chi(ens.x, x_new))
    alive = P >= ens.theta
    total_guess = np.where(alive, np.floor(P + ub), 0.0)
    if total_guess.size and np.bincount(ens.owner, weights=np.maximum(total_guess, alive)).max() > cap:
        raise PopulationExplosion(f"population exceeded cap {cap}")
    n_off = np.where(alive, np.maximum(total_guess, 1.0), 0.0).astype(np.int64)

    parent = np.repeat(np.arange(ens.N), n_off)
    starts = np.cumsum(n_off) - n_off
    rank = np.arange(parent.size, dtype=np.int64) - np.repeat(starts, n_off)
    first = rank == 0
    Pp = P[parent]
    lo = 1.0 / Pp
    pkey = key[parent]
    r64 = rank.astype(np.uint64)
    with np.errstate(over="ignore"):
        ut = uniform(pkey, counter(k, np.uint64(2) + r64))
        ckey = child_key(pkey, k, r64)
    theta = np.where(first, ens.theta[parent] / Pp, lo + (1.0 - lo) * ut)
    bad = ~((theta > 0) & (theta <= 1)) & (ens.theta[parent] > 0)
    if np.any(bad):
        raise AssertionError("ticket left (0, 1]")
    new_births = int(np.count_nonzero(~first))
    out = Ensemble(
        x=x_new[parent],
        theta=theta,
        gen=ens.gen[parent] + (~first).astype(np.int64),
        birth=np.where(first, ens.birth[parent], (ens.step + 1) * ens.eps),
        key=np.where(first, pkey, ckey),
        owner=ens.owner[parent],
        step=ens.step + 1,
        eps=ens.eps,
        births=ens.births + new_births,
        deaths=ens.deaths + int(np.count_nonzero(~alive)),
        work=ens.work + ens.N,
    )
    return out


_DONE, _OUT_FULL, _BUF_FULL = 0, 1, 2


@njit
def _tdmc_linear_nb(x0, th0, key0, a, eps, n_steps, code, snap_steps, cap, j0, nout0,
                    ox, oth, og, ob, ok, oo, osn, bx, bth, bg, bb, bk, births, deaths, work):
    """Lineage-by-lineage evolution from ancestor ``j0``.

    State lives in two-row buffers indexed by step parity, so no array is
    reassigned inside the loops. When an output or state buffer fills, the
    partial ancestor is discarded and (j, nout, status) is returned so the
    caller can grow the buffers and resume; draws are keyed, so the replay
    is identical.
    """
    M = x0.size
    nsnap = snap_steps.size
    sq = math.sqrt(eps)
    size = bx.shape[1]
    nout = nout0
    for j in range(j0, M):
        start = nout
        births[j] = 0
        deaths[j] = 0
        work[j] = 0
        n = 1
        bx[0, 0] = x0[j]
        bth[0, 0] = th0[j]
        bg[0, 0] = 0
        bb[0, 0] = 0.0
        bk[0, 0] = key0[j]
        si = 0
        for k in range(n_steps + 1):
            c = k & 1
            while si < nsnap and snap_steps[si] == k:
                if nout + n > ox.size:
                    return j, start, _OUT_FULL
                for i in range(n):
                    ox[nout] = bx[c, i]
                    oth[nout] = bth[c, i]
                    og[nout] = bg[c, i]
                    ob[nout] = bb[c, i]
                    ok[nout] = bk[c, i]
                    oo[nout] = j
                    osn[nout] = si
                    nout += 1
                si += 1
            if k == n_steps:
                break
            work[j] += n
            d = 1 - c
            m = 0
            ku = np.uint64(k)
            for i in range(n):
                key = bk[c, i]
                x = bx[c, i]
                u1 = uniform_nb(key, counter_nb(ku, 0))
                u2 = uniform_nb(key, counter_nb(ku, 1))
                ub = uniform_nb(key, counter_nb(ku, 2))
                xn = x + sq * from_uniforms_nb(code, u1, u2)
                P = np.exp(-((-a * xn) - (-a * x)))  # same rounding as the numpy path
                th = bth[c, i]
                if P < th:
                    deaths[j] += 1
                    continue
                f = np.floor(P + ub)
                if f > cap or m + f > cap:
                    raise PopulationExplosion("population exceeded cap")
                noff = max(int(f), 1)
                if m + noff > size:
                    return j, start, _BUF_FULL
                tnew = th / P
                if th > 0 and not (tnew > 0 and tnew <= 1):
                    raise AssertionError("ticket left (0, 1]")
                bx[d, m] = xn
                bth[d, m] = tnew
                bg[d, m] = bg[c, i]
                bb[d, m] = bb[c, i]
                bk[d, m] = key
                m += 1
                if noff > 1:
                    lo = 1.0 / P
                    tb = (k + 1) * eps
                    for r in range(1, noff):
                        ut = uniform_nb(key, counter_nb(ku, 2 + r))
                        bx[d, m] = xn
                        bth[d, m] = lo + (1.0 - lo) * ut
                        bg[d, m] = bg[c, i] + 1
                        bb[d, m] = tb
                        bk[d, m] = child_key_nb(key, ku, r)
                        m += 1
                    births[j] += noff - 1
            n = m
    return M, nout, _DONE


def _grow(arrs, used, size):
    out = []
    for arr in arrs:
        new = np.empty(size, arr.dtype)
        new[:used] = arr[:used]
        out.append(new)
    return out


def _tdmc_linear(x0, th0, key0, a, eps, n_steps, code, snap_steps, cap):
    M = x0.size
    out = [np.empty(max(64, 2 * M * snap_steps.size), dt)
           for dt in (float, float, np.int64, float, np.uint64, np.int64, np.int64)]
    width = 64
    bufs = [np.empty((2, width), dt) for dt in (float, float, np.int64, float, np.uint64)]
    births, deaths, work = (np.zeros(M, np.int64) for _ in range(3))
    j, nout = 0, 0
    while True:
        j, nout, status = _tdmc_linear_nb(x0, th0, key0, a, eps, n_steps, code, snap_steps, cap, j, nout,
                                          *out, *bufs, births, deaths, work)
        if status == _DONE:
            break
        if status == _OUT_FULL:
            out = _grow(out, nout, 2 * out[0].size)
        else:
            width *= 2
            bufs = [np.empty((2, width), b.dtype) for b in bufs]
    return tuple(a[:nout] for a in out) + (births, deaths, work)


@dataclass
class TdmcRun:
    """Snapshots of a batch of independent TDMC copies."""

    M: int
    eps: float
    snap_steps: np.ndarray
    snapshots: list
    births: np.ndarray
    deaths: np.ndarray
    work: np.ndarray
    trace: Optional[list] = field(default=None, repr=False)

    @property
    def final(self):
        return self.snapshots[-1]

    def counts(self, i=-1):
        return self.snapshots[i].counts_by_owner(self.M)


def _split_snapshots(arrs, nsnap, snap_steps, eps):
    ox, oth, og, ob, ok, oo, osn = arrs
    order = np.argsort(osn, kind="stable")
    ox, oth, og, ob, ok, oo, osn = (a[order] for a in (ox, oth, og, ob, ok, oo, osn))
    bounds = np.searchsorted(osn, np.arange(nsnap + 1))
    snaps = []
    for s in range(nsnap):
        sl = slice(bounds[s], bounds[s + 1])
        snaps.append(Ensemble(x=ox[sl], theta=oth[sl], gen=og[sl], birth=ob[sl], key=ok[sl], owner=oo[sl],
                              step=int(snap_steps[s]), eps=eps))
    return snaps


def run_tdmc(t, M, potential: Potential, params: ChainParams, dist: StepDistribution, rng: RngStream,
             x0=0.0, theta0="uniform", snap_times=None, cap=DEFAULT_CAP, trace: Callable = None,
             backend=None):
    """Run M independent copies of ticketed DMC up to time t.

    ``snap_times`` (default ``[t]``) are the times at which the population is
    recorded. A ``trace`` callback receives the Ensemble after every step and
    forces the numpy path.
    """
    n_steps = params.n_steps(t)
    if snap_times is None:
        snap_steps = np.array([n_steps], dtype=np.int64)
    else:
        snap_steps = np.array(sorted(params.n_steps(s) for s in snap_times), dtype=np.int64)
        if snap_steps.size and snap_steps[-1] > n_steps:
            raise ValueError("snapshot time beyond horizon")
    ens = Ensemble.initial(x0, M, rng, params.eps, theta0)
    backend = _backend.resolve(backend)
    fast = (backend == "numba" and trace is None and potential.is_linear and params.plain and params.dim == 1)
    if fast:
        out = _tdmc_linear(ens.x, ens.theta, ens.key, float(potential.slope), float(params.eps), n_steps,
                           dist.code, snap_steps, int(cap))
        snaps = _split_snapshots(out[:7], snap_steps.size, snap_steps, params.eps)
        return TdmcRun(M, params.eps, snap_steps, snaps, out[7], out[8], out[9])

    births = np.zeros(M, np.int64)
    deaths = np.zeros(M, np.int64)
    work = np.zeros(M, np.int64)
    snaps = []
    si = 0
    for k in range(n_steps + 1):
        while si < snap_steps.size and snap_steps[si] == k:
            snaps.append(ens)
            si += 1
        if k == n_steps:
            break
        prev = ens
        ens = tdmc_step(prev, potential, params, dist, cap=cap)
        work += np.bincount(prev.owner, minlength=M)
        child = ens.gen > 0
        newborn = child & (ens.birth == ens.step * ens.eps)
        births += np.bincount(ens.owner[newborn], minlength=M)
        survivors = np.bincount(ens.owner[~newborn], minlength=M)
        deaths += np.bincount(prev.owner, minlength=M) - survivors
        if trace is not None:
            trace(ens)
    return TdmcRun(M, params.eps, snap_steps, snaps, births, deaths, work)


def run_estimator(f, t, M, potential: Potential, params: ChainParams, dist: StepDistribution, rng: RngStream,
                  replicas=1, x0=0.0, theta0="uniform", cap=DEFAULT_CAP, trace=None, backend=None):
    """(1/M) sum_j f(x_t^(j)) averaged over replicas of M copies.

    Returns ``(estimate, stderr, run)``; stderr is across replicas when there
    are at least two, otherwise across the M independent copies.
    """
    run = run_tdmc(t, M * replicas, potential, params, dist, rng, x0=x0, theta0=theta0, cap=cap,
                   trace=trace, backend=backend)
    ens = run.final
    fx = np.asarray(f(ens.x), dtype=float) * np.ones(ens.N)
    per_copy = np.bincount(ens.owner, weights=fx, minlength=M * replicas)
    if replicas >= 2:
        rep = per_copy.reshape(replicas, M).mean(axis=1)
        return float(rep.mean()), float(rep.std(ddof=1) / math.sqrt(replicas)), run
    if M < 2:
        return float(per_copy.mean()), math.nan, run
    return float(per_copy.mean()), float(per_copy.std(ddof=1) / math.sqrt(M)), run


# ---------------------------------------------------------------- offspring rate

@njit
def _rate_nb(keys, a, eps, n_steps, gamma, code, max_follow):
    R = keys.size
    counts = np.zeros(R, np.int64)
    sq = math.sqrt(eps)
    th_hit = math.exp(-a * gamma)
    for r in range(R):
        key = keys[r]
        x = 0.0
        for k in range(n_steps):
            ku = np.uint64(k)
            u1 = uniform_nb(key, counter_nb(ku, 0))
            u2 = uniform_nb(key, counter_nb(ku, 1))
            ub = uniform_nb(key, counter_nb(ku, 2))
            xn = x + sq * from_uniforms_nb(code, u1, u2)
            P = np.exp(-((-a * xn) - (-a * x)))
            noff = max(int(np.floor(P + ub)), 1)
            lo = 1.0 / P
            for i in range(1, noff):
                th = lo + (1.0 - lo) * uniform_nb(key, counter_nb(ku, 2 + i))
                ck = child_key_nb(key, ku, i)
                y = xn
                kk = k + 1
                for _ in range(max_follow):
                    if th <= th_hit:
                        counts[r] += 1
                        break
                    kv = np.uint64(kk)
                    v1 = uniform_nb(ck, counter_nb(kv, 0))
                    v2 = uniform_nb(ck, counter_nb(kv, 1))
                    yn = y + sq * from_uniforms_nb(code, v1, v2)
                    P2 = np.exp(-((-a * yn) - (-a * y)))
                    if P2 < th:
                        break
                    th = th / P2
                    y = yn
                    kk += 1
            x = xn
    return counts


def _rate_np(keys, a, eps, n_steps, gamma, code, max_follow):
    R = keys.size
    sq = math.sqrt(eps)
    th_hit = math.exp(-a * gamma)
    x = np.zeros(R)
    kid_owner, kid_key, kid_x, kid_th, kid_step = [], [], [], [], []
    with np.errstate(over="ignore"):
        for k in range(n_steps):
            ku = np.uint64(k)
            u1 = uniform(keys, counter(ku, np.uint64(0)))
            u2 = uniform(keys, counter(ku, np.uint64(1)))
            ub = uniform(keys, counter(ku, np.uint64(2)))
            xn = x + sq * _from_code(code, u1, u2)
            P = np.exp(-((-a * xn) - (-a * x)))
            noff = np.maximum(np.floor(P + ub), 1.0).astype(np.int64)
            extra = noff - 1
            if extra.any():
                par = np.repeat(np.arange(R), extra)
                starts = np.cumsum(extra) - extra
                rank = (np.arange(par.size) - np.repeat(starts, extra) + 1).astype(np.uint64)
                lo = 1.0 / P[par]
                kid_th.append(lo + (1.0 - lo) * uniform(keys[par], counter(ku, np.uint64(2) + rank)))
                kid_key.append(child_key(keys[par], ku, rank))
                kid_owner.append(par)
                kid_x.append(xn[par])
                kid_step.append(np.full(par.size, k + 1, np.int64))
            x = xn
        counts = np.zeros(R, np.int64)
        if not kid_owner:
            return counts
        owner = np.concatenate(kid_owner)
        ck = np.concatenate(kid_key)
        y = np.concatenate(kid_x)
        th = np.concatenate(kid_th)
        kk = np.concatenate(kid_step)
        active = np.ones(owner.size, bool)
        for _ in range(max_follow):
            hit = active & (th <= th_hit)
            counts += np.bincount(owner[hit], minlength=R)
            active &= ~hit
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            kv = kk[idx].astype(np.uint64)
            v1 = uniform(ck[idx], counter(kv, np.uint64(0)))
            v2 = uniform(ck[idx], counter(kv, np.uint64(1)))
            yn = y[idx] + sq * _from_code(code, v1, v2)
            P2 = np.exp(-((-a * yn) - (-a * y[idx])))
            dead = P2 < th[idx]
            active[idx[dead]] = False
            keep = idx[~dead]
            th[keep] = th[keep] / P2[~dead]
            y[keep] = yn[~dead]
            kk[keep] += 1
    return counts


def _from_code(code, u1, u2):
    from .chain import from_uniforms
    return from_uniforms(code, u1, u2)


def offspring_rate_experiment(a, gamma, T, eps, dist: StepDistribution, replicas, rng: RngStream,
                              max_follow=10**8, backend=None):
    """Rate of first-generation offspring of an immortal ancestor that climb
    to height ``gamma`` above their own barrier before dying.

    Returns ``(rate, stderr, counts)`` with ``counts`` the per-replica tallies.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if eps > gamma**2 / 10:
        raise ValueError("eps must be <= gamma^2 / 10")
    n_steps = ChainParams(eps).n_steps(T)
    keys = keys_for(rng.key, replicas)
    if _backend.resolve(backend) == "numba":
        counts = _rate_nb(keys, float(a), float(eps), n_steps, float(gamma), dist.code, int(max_follow))
    else:
        counts = _rate_np(keys, float(a), float(eps), n_steps, float(gamma), dist.code, int(max_follow))
    rates = counts / T
    se = float(rates.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.nan
    return float(rates.mean()), se, counts


def moment_table(counts, p_max=4):
    """Sample moments E N^p, p = 1..p_max, with standard errors."""
    counts = np.asarray(counts, dtype=float)
    out = []
    for p in range(1, p_max + 1):
        v = counts**p
        out.append((float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))))
    return out
