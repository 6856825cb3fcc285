"""First passage of the unit-variance walk from 0 through the corridor
(-s, gamma): hitting probabilities, the limit function G, its renewal and
half identities, and walk excursions conditioned to reach a level."""

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, linalg

from . import _backend
from ._backend import njit
from ._rng import RngStream, child_key, child_key_nb, counter, counter_nb, keys_for, uniform, uniform_nb
from .chain import StepDistribution, from_uniforms, from_uniforms_nb
from .fan import Excursion

DEFAULT_STEP_CAP = 10**7


class StepCapExceeded(RuntimeError):
    """Raised when a batch of walks uses more steps than its cap."""


class RetryCapExceeded(RuntimeError):
    """Raised when rejection sampling runs out of attempts."""


@dataclass(frozen=True)
class HittingQuery:
    s: float
    gamma: float
    dist: StepDistribution = field(default_factory=StepDistribution)

    def __post_init__(self):
        if not self.s >= 0:
            raise ValueError("s must be >= 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


# ------------------------------------------------------------- walk batches

@njit
def _corridor_nb(keys, code, gamma, s_kill, step_cap):
    """Walk each key from 0 until >= gamma or <= -s_kill; record success and
    the running minimum over steps 1, 2, ..."""
    n = keys.size
    hit = np.zeros(n, np.bool_)
    low = np.empty(n)
    used = 0
    for i in range(n):
        key = keys[i]
        y = 0.0
        m = math.inf
        k = 0
        while True:
            ku = np.uint64(k)
            y += from_uniforms_nb(code, uniform_nb(key, counter_nb(ku, 0)), uniform_nb(key, counter_nb(ku, 1)))
            k += 1
            if y < m:
                m = y
            if y >= gamma:
                hit[i] = True
                break
            if y <= -s_kill:
                break
            if used + k > step_cap:
                raise StepCapExceeded("walk batch exceeded its step cap")
        used += k
        low[i] = m
    return hit, low, used


def _corridor_np(keys, code, gamma, s_kill, step_cap):
    n = keys.size
    hit = np.zeros(n, bool)
    low = np.full(n, np.inf)
    y = np.zeros(n)
    active = np.arange(n)
    used = 0
    k = 0
    with np.errstate(over="ignore"):
        while active.size:
            ku = np.uint64(k)
            kk = keys[active]
            y[active] += from_uniforms(code, uniform(kk, counter(ku, np.uint64(0))),
                                       uniform(kk, counter(ku, np.uint64(1))))
            used += active.size
            if used > step_cap:
                raise StepCapExceeded("walk batch exceeded its step cap")
            low[active] = np.minimum(low[active], y[active])
            up = y[active] >= gamma
            hit[active[up]] = True
            done = up | (y[active] <= -s_kill)
            active = active[~done]
            k += 1
    return hit, low, used


@dataclass
class CorridorBatch:
    """Walks stopped at the first exit of (-s_max, gamma)."""

    gamma: float
    s_max: float
    hit: np.ndarray
    low: np.ndarray
    steps: int

    def successes(self, s):
        """Indicator of reaching gamma before (-inf, -s], for s <= s_max."""
        if s > self.s_max + 1e-12:
            raise ValueError("s beyond the simulated corridor")
        return self.hit & (self.low > -s)

    def prob(self, s):
        x = self.successes(s).astype(float)
        return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def corridor_batch(gamma, s_max, dist: StepDistribution, samples, rng: RngStream, step_cap=DEFAULT_STEP_CAP,
                   backend=None):
    keys = keys_for(rng.key, samples)
    if _backend.resolve(backend) == "numba":
        hit, low, used = _corridor_nb(keys, dist.code, float(gamma), float(s_max), int(step_cap))
    else:
        hit, low, used = _corridor_np(keys, dist.code, float(gamma), float(s_max), int(step_cap))
    return CorridorBatch(float(gamma), float(s_max), hit, low, int(used))


def hit_prob_mc(q: HittingQuery, samples, rng: RngStream, step_cap=DEFAULT_STEP_CAP, backend=None):
    """Monte Carlo P_{s,gamma}; returns (estimate, stderr)."""
    if samples < 100:
        raise ValueError("samples must be >= 100")
    return corridor_batch(q.gamma, q.s, q.dist, samples, rng, step_cap, backend).prob(q.s)


# ------------------------------------------------------------ lattice oracle

def hit_prob_exact_rademacher(s, gamma):
    """P_{s,gamma} for the +-1 walk, by solving the absorbing chain on the
    integer states strictly inside (-s, gamma)."""
    if float(gamma) != int(gamma) or gamma < 1:
        raise ValueError("gamma must be a positive integer")
    if s < 0:
        raise ValueError("s must be >= 0")
    gamma = int(gamma)
    lo = -math.ceil(s) + 1 if s > 0 else 1
    states = list(range(lo, gamma))
    if not states:
        return 0.5
    idx = {z: i for i, z in enumerate(states)}
    A = np.eye(len(states))
    b = np.zeros(len(states))
    for z, i in idx.items():
        for nb in (z - 1, z + 1):
            if nb >= gamma:
                b[i] += 0.5
            elif nb in idx:
                A[i, idx[nb]] -= 0.5
    h = linalg.solve(A, b)
    # the starting point 0 is not itself checked against the lower barrier
    return float(sum(0.5 * (1.0 if z >= gamma else (h[idx[z]] if z in idx else 0.0)) for z in (-1, 1)))


def rademacher_G(s):
    """Closed form: G(0) = 1/2, G(s) = ceil(s) for s > 0."""
    s = np.asarray(s, float)
    return np.where(s > 0, np.ceil(s), 0.5)


# ----------------------------------------------------------------------- G

@dataclass
class GEstimate:
    G: float
    stderr: float
    gammas: np.ndarray
    scaled: np.ndarray
    scaled_stderr: np.ndarray

    @property
    def differences(self):
        return np.diff(self.scaled)


def estimate_G(s, dist: StepDistribution, gamma_schedule, samples, rng: RngStream, step_cap=None, backend=None):
    """(gamma + s) P_{s,gamma} along the schedule; the last entry is the estimate."""
    gs = np.asarray(gamma_schedule, float)
    if gs.size < 3 or np.any(np.diff(gs) <= 0):
        raise ValueError("gamma_schedule must be increasing with at least 3 entries")
    vals, ses = [], []
    for i, g in enumerate(gs):
        cap = step_cap or max(DEFAULT_STEP_CAP, int(50 * samples * (g + s + 2) ** 2))
        p, se = hit_prob_mc(HittingQuery(s, g, dist), samples, rng.child(i), cap, backend)
        vals.append((g + s) * p)
        ses.append((g + s) * se)
    vals, ses = np.array(vals), np.array(ses)
    return GEstimate(float(vals[-1]), float(ses[-1]), gs, vals, ses)


@dataclass
class GGrid:
    """G on a uniform s grid from one coupled batch at a fixed large gamma.

    Beyond the grid, G(s) = s + bias with the bias fitted on the top quarter
    of the grid.
    """

    s: np.ndarray
    G: np.ndarray
    stderr: np.ndarray
    gamma: float
    bias: float
    kind: str = ""

    def __call__(self, s):
        s = np.asarray(s, float)
        inside = np.interp(s, self.s, self.G)
        return np.where(s > self.s[-1], s + self.bias, inside)

    def stderr_at(self, s):
        s = np.asarray(s, float)
        return np.where(s > self.s[-1], self.stderr[-1], np.interp(s, self.s, self.stderr))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "G", "stderr"])
            for row in zip(self.s, self.G, self.stderr):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, gamma=math.nan, kind=""):
        rows = list(csv.DictReader(Path(path).open()))
        s = np.array([float(r["s"]) for r in rows])
        G = np.array([float(r["G"]) for r in rows])
        se = np.array([float(r["stderr"]) for r in rows])
        return cls(s, G, se, gamma, _fit_bias(s, G), kind)


def _fit_bias(s, G):
    top = s >= s[0] + 0.75 * (s[-1] - s[0])
    return float(np.mean(G[top] - s[top]))


def g_grid_batch(dist, gamma, s_max, samples, rng, backend=None):
    cap = max(DEFAULT_STEP_CAP, int(20 * samples * (gamma + s_max + 2) ** 2))
    return corridor_batch(gamma, s_max, dist, samples, rng, cap, backend)


def compute_G_grid(dist: StepDistribution, rng: RngStream, gamma=64.0, s_max=8.0, ds=0.1, samples=100_000,
                   backend=None):
    batch = g_grid_batch(dist, gamma, s_max, samples, rng, backend)
    s = np.round(np.arange(0.0, s_max + ds / 2, ds), 12)
    G = np.empty(s.size)
    se = np.empty(s.size)
    for i, si in enumerate(s):
        p, e = batch.prob(si)
        G[i] = (gamma + si) * p
        se[i] = (gamma + si) * e
    return GGrid(s, G, se, float(gamma), _fit_bias(s, G), dist.kind)


def check_renewal(s, dist: StepDistribution, samples, rng: RngStream, grid: GGrid = None, return_stderr=False):
    """|G(s) - E[G(s + xi); xi > -s]| with G read from the cached grid.

    The expectation over xi is computed by quadrature against the step law.
    The stderr combines the grid errors at s and along the shifted points.
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    if grid is None:
        grid = compute_G_grid(dist, rng, samples=samples)
    lhs = float(grid(s))
    with warnings.catch_warnings():
        # the interpolant has kinks at every node; quad still converges
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        rhs = dist.expect(lambda z: float(grid(s + z)), lower=-s)
        se_rhs = dist.expect(lambda z: float(grid.stderr_at(s + z)), lower=-s)
    residual = abs(lhs - rhs)
    if not return_stderr:
        return residual
    return residual, float(math.hypot(float(grid.stderr_at(s)), se_rhs))


def _half_weights(dist: StepDistribution, s_grid):
    """Quadrature weights w_i with sum_i w_i G(s_i) approximating the integral
    of nu([s, inf)) G(s) over s >= 0 (trapezoid in s)."""
    s = np.asarray(s_grid, float)
    tw = np.zeros(s.size)
    d = np.diff(s)
    tw[:-1] += d / 2
    tw[1:] += d / 2
    return tw * dist.tail(s)


def check_half_identity(dist: StepDistribution, s_grid, samples, rng: RngStream, gamma=64.0, backend=None,
                        batch: CorridorBatch = None):
    """Integral of nu([s, inf)) G(s) over s >= 0; returns (value, stderr).

    For the two-point law G is exact (ceiling form) and the midpoint rule on
    unit cells is exact. Otherwise G comes from one coupled walk batch and
    the stderr from the per-walk spread of the quadrature sum. A precomputed
    ``batch`` (gamma and s range matching) may be passed in.
    """
    s = np.asarray(s_grid, float)
    if dist.lattice:
        mids = np.arange(0.5, math.ceil(max(s.max(), 1.0)))
        return float(np.sum(dist.tail(mids) * rademacher_G(mids))), 0.0
    w = _half_weights(dist, s)
    if batch is None:
        batch = g_grid_batch(dist, gamma, float(s.max()), samples, rng, backend)
    gamma = batch.gamma
    contrib = np.zeros(batch.hit.size)
    for wi, si in zip(w, s):
        if wi != 0.0:
            contrib += wi * (gamma + si) * batch.successes(si)
    return float(contrib.mean()), float(contrib.std(ddof=1) / math.sqrt(contrib.size))


# ----------------------------------------------- conditioned walk excursions

def _retry_cap(eps):
    return int(math.ceil(1e3 / math.sqrt(eps)))


def conditioned_excursion_sample(z, gamma, eps, dist: StepDistribution, rng: RngStream, horizon=math.inf,
                                 retry_cap=None):
    """Walk from z sqrt(eps) with steps sqrt(eps) xi, kept iff it reaches gamma
    before entering (-inf, 0], then run to that entry (or to ``horizon``)."""
    if z < 0:
        raise ValueError("z must be >= 0")
    cap = retry_cap or _retry_cap(eps)
    sq = math.sqrt(eps)
    n_max = int(round(horizon / eps)) if math.isfinite(horizon) else 10**9
    for attempt in range(cap):
        r = rng.child(attempt)
        y = z * sq
        path = [y]
        reached = y >= gamma
        while len(path) <= n_max:
            u = r.random(2)
            y += sq * float(dist.from_uniforms(u[0], u[1]))
            path.append(y)
            if y <= 0:
                break
            reached = reached or y >= gamma
        if reached:
            assert max(path) >= gamma
            e = (len(path) - 1) * eps if y <= 0 else math.inf
            return Excursion(0.0, e, eps, np.asarray(path), z * sq)
    raise RetryCapExceeded(f"no accepted path in {cap} attempts")


@njit
def _cond_stats_nb(root, code, z, gamma, eps, n_steps, mid_step, n_out, retry_cap):
    life = np.full(n_out, math.inf)
    mid = np.full(n_out, np.nan)
    sq = math.sqrt(eps)
    got = 0
    tries = 0
    while got < n_out:
        if tries >= retry_cap:
            raise RetryCapExceeded("conditioned excursion retry cap exhausted")
        key = child_key_nb(root, np.uint64(0), np.uint64(tries))
        tries += 1
        y = z * sq
        reached = y >= gamma
        midv = np.nan
        dead_at = -1
        for k in range(1, n_steps + 1):
            ku = np.uint64(k)
            y += sq * from_uniforms_nb(code, uniform_nb(key, counter_nb(ku, 0)), uniform_nb(key, counter_nb(ku, 1)))
            if y <= 0.0:
                dead_at = k
                break
            if y >= gamma:
                reached = True
            if k == mid_step:
                midv = y
        if reached:
            if dead_at > 0:
                life[got] = dead_at * eps
            mid[got] = midv
            got += 1
    return life, mid, tries


def _cond_stats_np(root, code, z, gamma, eps, n_steps, mid_step, n_out, retry_cap, chunk=20_000):
    sq = math.sqrt(eps)
    lives, mids = [], []
    got = 0
    start = 0
    with np.errstate(over="ignore"):
        while got < n_out:
            if start >= retry_cap:
                raise RetryCapExceeded("conditioned excursion retry cap exhausted")
            m = min(chunk, retry_cap - start)
            keys = child_key(np.uint64(root), np.uint64(0), np.arange(start, start + m, dtype=np.uint64))
            start += m
            y = np.full(m, z * sq)
            reached = y >= gamma
            life = np.full(m, np.inf)
            mid = np.full(m, np.nan)
            active = np.arange(m)
            for k in range(1, n_steps + 1):
                if active.size == 0:
                    break
                ku = np.uint64(k)
                kk = keys[active]
                y[active] += sq * from_uniforms(code, uniform(kk, counter(ku, np.uint64(0))),
                                                uniform(kk, counter(ku, np.uint64(1))))
                ya = y[active]
                dead = ya <= 0.0
                life[active[dead]] = k * eps
                reached[active[~dead & (ya >= gamma)]] = True
                active = active[~dead]
                if k == mid_step:
                    mid[active] = y[active]
            acc = np.flatnonzero(reached)[: n_out - got]
            lives.append(life[acc])
            mids.append(mid[acc])
            got += acc.size
    return np.concatenate(lives), np.concatenate(mids)


def conditioned_excursion_stats(z, gamma, eps, dist: StepDistribution, n, rng: RngStream, horizon=1.0, t_mid=0.25,
                                retry_cap=None, backend=None):
    """Lifetimes (inf when alive at ``horizon``) and values at ``t_mid`` (nan
    when dead by then) of ``n`` accepted walk excursions.

    A walk that has not reached gamma by the horizon counts as rejected.
    Attempts are keyed by their index, so both backends accept the same walks.
    """
    cap = retry_cap or n * _retry_cap(eps)
    args = (np.uint64(rng.key), dist.code, float(z), float(gamma), float(eps), int(round(horizon / eps)),
            int(round(t_mid / eps)), int(n), int(cap))
    if _backend.resolve(backend) == "numba":
        life, mid, _ = _cond_stats_nb(*args)
        return life, mid
    return _cond_stats_np(*args)
