"""Truncated Brownian fan.

Two samplers share the same law:

* ``sample_fan`` builds a realisation with every excursion stored on a time
  grid (Bessel-3 climb to the height cutoff, then Brownian descent), which
  supports ``evaluate`` into a PointMeasure.
* ``sample_fan_counts`` keeps only birth and death times. An excursion
  conditioned to reach ``gamma`` has a Pareto maximum ``m = gamma / U`` and,
  given ``m``, a lifetime ``m^2 (tau + tau')`` with ``tau, tau'`` independent
  Bessel-3 passage times of level 1 from 0. Sampling once at the smallest
  cutoff and thinning by ``m >= gamma`` yields every coarser cutoff on the
  same probability space.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _backend
from ._backend import njit
from ._rng import RngStream, child_key, child_key_nb, counter, counter_nb, keys_for, uniform, uniform_nb
from .lpspace import PointMeasure

MAX_STORED_SAMPLES = 10**8
BES3_TERMS = 48
# poisson draws are split into pieces of at most this mean
_POISSON_PIECE = 64.0


class FanMemoryGuard(RuntimeError):
    """Raised when a path-level fan would store too many grid samples."""


@dataclass
class Excursion:
    s: float
    e: float
    h: float
    values: np.ndarray = field(repr=False)
    birth_level: float
    generation: int = 0
    tag: Optional[float] = None

    @property
    def lifetime(self):
        return self.e - self.s

    def alive(self, t):
        return self.s < t < self.e

    def value_at(self, t):
        """Linear interpolation on the grid; constant outside the stored range."""
        u = (t - self.s) / self.h
        if u <= 0:
            return float(self.values[0])
        i = int(math.floor(u))
        if i >= self.values.size - 1:
            return float(self.values[-1])
        f = u - i
        return float((1.0 - f) * self.values[i] + f * self.values[i + 1])

    @property
    def max_height(self):
        return float(self.values.max() - self.birth_level)

    def to_dict(self):
        d = {"s": self.s, "e": self.e if math.isfinite(self.e) else None, "h": self.h,
             "generation": self.generation, "birth_level": self.birth_level, "values": self.values.tolist()}
        if self.tag is not None:
            d["tag"] = self.tag
        return d

    @classmethod
    def from_dict(cls, d):
        e = math.inf if d["e"] is None else d["e"]
        return cls(d["s"], e, d["h"], np.asarray(d["values"], float), d["birth_level"], d["generation"], d.get("tag"))


@dataclass
class FanParams:
    a: float
    gamma: float
    n_max: int
    T: float
    h: float
    x: float = 0.0
    v: float = 0.0


@dataclass
class FanRealization:
    excursions: list
    params: FanParams

    def by_generation(self, g):
        return [w for w in self.excursions if w.generation == g]

    def to_json(self):
        return json.dumps({"params": asdict(self.params), "excursions": [w.to_dict() for w in self.excursions]})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls([Excursion.from_dict(w) for w in d["excursions"]], FanParams(**d["params"]))


# ------------------------------------------------------------------ grid paths

def _bes3_to_level(gamma, h, gen, max_steps, block=4096):
    """Norm of a 3-d grid Brownian motion from 0 up to the first point >= gamma."""
    sq = math.sqrt(h)
    pos = np.zeros(3)
    out = [np.zeros(1)]
    used = 0
    while used < max_steps:
        n = min(block, max_steps - used)
        path = pos + np.cumsum(sq * gen.standard_normal((n, 3)), axis=0)
        r = np.sqrt((path**2).sum(axis=1))
        hit = np.flatnonzero(r >= gamma)
        if hit.size:
            out.append(r[: hit[0] + 1])
            return np.concatenate(out), True
        out.append(r)
        pos = path[-1]
        used += n
    return np.concatenate(out), False


def _bm_to_level(start, level, h, gen, max_steps, block=4096):
    """Grid Brownian motion from ``start`` until the first point <= level.

    Returns (values including start, hit flag). On a hit the last value is
    set to ``level`` exactly.
    """
    sq = math.sqrt(h)
    out = [np.array([start])]
    cur = start
    used = 0
    while used < max_steps:
        n = min(block, max_steps - used)
        path = cur + np.cumsum(sq * gen.standard_normal(n))
        hit = np.flatnonzero(path <= level)
        if hit.size:
            seg = path[: hit[0] + 1].copy()
            seg[-1] = level
            out.append(seg)
            return np.concatenate(out), True
        out.append(path)
        cur = path[-1]
        used += n
    return np.concatenate(out), False


def _steps_for(max_time, h, max_samples):
    if math.isinf(max_time):
        return max_samples
    return min(max_samples, int(math.floor(max_time / h + 1e-9)))


def sample_excursion_geq(gamma, h, rng: RngStream, max_time=math.inf, max_samples=MAX_STORED_SAMPLES):
    """Excursion from 0 conditioned to reach ``gamma``, started at time 0.

    Paths still positive after ``max_time`` are returned with ``e = inf``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    if not 0 < h <= gamma**2 / 100 * (1 + 1e-12):
        raise ValueError(f"grid step h={h} too coarse; need h <= gamma^2/100 = {gamma**2 / 100}")
    gen = rng.generator()
    steps = _steps_for(max_time, h, max_samples)
    up, reached = _bes3_to_level(gamma, h, gen, steps)
    if not reached:
        if math.isinf(max_time):
            raise FanMemoryGuard("Bessel climb exceeded the stored-sample guard")
        return Excursion(0.0, math.inf, h, up, 0.0)
    down, hit = _bm_to_level(up[-1], 0.0, h, gen, steps - (up.size - 1))
    values = np.concatenate([up, down[1:]])
    if not hit and math.isinf(max_time):
        raise FanMemoryGuard("Brownian descent exceeded the stored-sample guard")
    e = (values.size - 1) * h if hit else math.inf
    assert values.max() >= gamma
    return Excursion(0.0, e, h, values, 0.0)


def sample_kernel(w: Excursion, a, gamma, T, h, rng: RngStream):
    """Children of ``w``: Poisson with mean a/(2 gamma) |life(w) ∩ [0, T]|."""
    lo = max(w.s, 0.0)
    hi = min(w.e, T)
    length = max(0.0, hi - lo)
    if length == 0.0 or a == 0.0:
        return []
    gen = rng.generator()
    K = int(gen.poisson(a / (2.0 * gamma) * length))
    taus = np.sort(lo + length * gen.random(K))
    kids = []
    for i, tau in enumerate(taus):
        exc = sample_excursion_geq(gamma, h, rng.child(i), max_time=T - tau)
        level = w.value_at(tau)
        kids.append(Excursion(float(tau), float(tau + exc.e), h, exc.values + level, level, w.generation + 1))
    return kids


def sample_ancestor(x, v, a, T, h, rng: RngStream, max_samples=MAX_STORED_SAMPLES):
    level = -v / a
    values, hit = _bm_to_level(float(x), level, h, rng.generator(), _steps_for(T, h, max_samples))
    e = (values.size - 1) * h if hit else math.inf
    return Excursion(0.0, e, h, values, float(x), 0, tag=float(v))


def draw_ancestor_tag(x, a, rng: RngStream, convention="inverse"):
    """Random tag for an ancestor at x. The offset L = x + v/a to the killing
    level is exponential with mean 1/a ("inverse", matching a uniform initial
    ticket) or mean a ("literal")."""
    E = -math.log(rng.random())
    if convention == "inverse":
        L = E / a
    elif convention == "literal":
        L = a * E
    else:
        raise ValueError("convention must be 'inverse' or 'literal'")
    return a * (L - x)


def sample_fan(x, v, a, gamma, n_max, T, h, rng: RngStream, ancestor_convention="inverse",
               max_samples=MAX_STORED_SAMPLES):
    """Path-level fan; ``v="random"`` draws the ancestor tag."""
    if not a > 0:
        raise ValueError("a must be > 0 for a killed ancestor")
    if isinstance(v, str):
        if v != "random":
            raise ValueError("v must be a number or 'random'")
        v = draw_ancestor_tag(x, a, rng.child(0, 0), ancestor_convention)
    if not v > -a * x:
        raise ValueError("need v > -a x")
    anc = sample_ancestor(x, v, a, T, h, rng.child(0, 1), max_samples)
    excs = [anc]
    stored = anc.values.size
    layer = [anc]
    for g in range(1, n_max + 1):
        nxt = []
        for idx, w in enumerate(layer):
            kids = sample_kernel(w, a, gamma, T, h, rng.child(1, g, idx))
            nxt.extend(kids)
            stored += sum(k.values.size for k in kids)
            if stored > max_samples:
                raise FanMemoryGuard(f"fan exceeded {max_samples} stored samples")
        excs.extend(nxt)
        layer = nxt
        if not layer:
            break
    return FanRealization(excs, FanParams(a, gamma, n_max, T, h, float(x), float(v)))


def evaluate(fr: FanRealization, t):
    """Tagged points (w_t, tag, generation) of the excursions alive at t."""
    if not 0 <= t <= fr.params.T:
        raise ValueError(f"t={t} outside [0, {fr.params.T}]")
    a = fr.params.a
    xs, vs, ns = [], [], []
    for w in fr.excursions:
        if w.alive(t):
            xs.append(w.value_at(t))
            vs.append(w.tag if w.tag is not None else -a * w.birth_level)
            ns.append(w.generation)
    return PointMeasure(xs, vs, ns, a=a)


def particle_count(fr: FanRealization, t):
    return sum(1 for w in fr.excursions if w.alive(t))


def modulus_statistic(W, dt, dyadic=None):
    """max over h in the dyadic set of max_t |W(t+h) - W(t)| / (h |log h|)."""
    W = np.asarray(W, float)
    if dyadic is None:
        dyadic = [2.0**-j for j in range(3, 11)]
    best = 0.0
    for d in dyadic:
        k = int(round(d / dt))
        if k < 1 or k >= W.size or abs(k * dt - d) > 1e-9:
            continue
        best = max(best, float(np.max(np.abs(W[k:] - W[:-k]))) / (d * abs(math.log(d))))
    return best


def workload(fr: FanRealization, time_grid, dyadic=None):
    """Trapezoid integral of N on a uniform grid and its modulus statistic."""
    grid = np.asarray(time_grid, float)
    if grid.size < 2 or grid[0] < 0 or grid[-1] > fr.params.T:
        raise ValueError("grid must lie within [0, T] and have two points")
    counts = np.array([particle_count(fr, t) for t in grid], float)
    W = cumulative_trapezoid(counts, grid, initial=0.0)
    return W, modulus_statistic(W, grid[1] - grid[0], dyadic)


# ------------------------------------------------------- exact-lifetime sampler

def _bes3_consts(n_terms):
    k = np.arange(1, n_terms + 1, dtype=float)
    coef = 2.0 / (k * k * math.pi**2)
    tail = 4.0 / math.pi**2 * (math.pi**2 / 6.0 - float(np.sum(1.0 / (k * k))))
    return coef, tail


@njit
def _poisson_nb(lam, key, step):
    """Inversion in pieces of mean <= _POISSON_PIECE, one uniform per piece."""
    if lam <= 0.0:
        return 0
    pieces = int(math.ceil(lam / 64.0))
    sub = lam / pieces
    total = 0
    for q in range(pieces):
        u = uniform_nb(key, counter_nb(step, q))
        p = math.exp(-sub)
        F = p
        k = 0
        while u > F and k < 100000:
            k += 1
            p = p * sub / k
            F = F + p
        total += k
    return total


def _poisson_np(lam, key, step):
    out = np.zeros(lam.size, np.int64)
    pieces = np.where(lam > 0, np.ceil(lam / _POISSON_PIECE), 0).astype(np.int64)
    sub = np.where(pieces > 0, lam / np.maximum(pieces, 1), 0.0)
    for q in range(int(pieces.max(initial=0))):
        idx = np.flatnonzero(pieces > q)
        u = uniform(key[idx], counter(np.uint64(step), np.uint64(q)))
        s = sub[idx]
        p = np.exp(-s)
        F = p.copy()
        k = np.zeros(idx.size, np.int64)
        active = u > F
        for _ in range(100000):
            if not active.any():
                break
            k = k + active
            p = np.where(active, p * s / np.maximum(k, 1), p)
            F = np.where(active, F + p, F)
            active = active & (u > F)
        out[idx] += k
    return out


@njit
def _fan_counts_nb(keys, a, gamma_min, n_max, T, L_fixed, literal, coef, tail, f0, n0, of, os_, oe, om, og, ok):
    """Excursions of fans f0, f0+1, ... appended from row n0.

    Returns (f, n, done). When the output is full, the partial fan is dropped
    and the caller grows the arrays and resumes at fan f (keyed draws make
    the replay identical); no array is reassigned inside the loops.
    """
    cap = of.size
    n = n0
    rate = a / (2.0 * gamma_min)
    for f in range(f0, keys.size):
        key = keys[f]
        u1 = uniform_nb(key, counter_nb(0, 0))
        u2 = uniform_nb(key, counter_nb(0, 1))
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        if L_fixed > 0.0:
            L = L_fixed
        else:
            E = -math.log(uniform_nb(key, counter_nb(0, 2)))
            L = a * E if literal else E / a
        life = (L / z) ** 2 if z != 0.0 else math.inf
        start = n
        if n + 1 > cap:
            return f, start, False
        of[n] = f
        os_[n] = 0.0
        oe[n] = life
        om[n] = math.inf
        og[n] = 0
        ok[n] = key
        n += 1
        i = start
        while i < n:
            g = og[i]
            if g < n_max:
                length = min(oe[i], T) - os_[i]
                if length > 0.0:
                    pk = ok[i]
                    K = _poisson_nb(rate * length, pk, np.uint64(1))
                    if n + K > cap:
                        return f, start, False
                    for c in range(K):
                        tau = os_[i] + length * uniform_nb(pk, counter_nb(2, c))
                        ck = child_key_nb(pk, np.uint64(3), np.uint64(c))
                        m = gamma_min / uniform_nb(ck, counter_nb(0, 0))
                        acc = tail
                        for j in range(coef.size):
                            w1 = uniform_nb(ck, counter_nb(0, 1 + 2 * j))
                            w2 = uniform_nb(ck, counter_nb(0, 2 + 2 * j))
                            acc += coef[j] * (-math.log(w1 * w2))
                        of[n] = f
                        os_[n] = tau
                        oe[n] = tau + m * m * acc
                        om[n] = min(om[i], m)
                        og[n] = g + 1
                        ok[n] = ck
                        n += 1
            i += 1
    return keys.size, n, True


def _fan_counts_compiled(keys, *args):
    size = max(1024, 4 * keys.size)
    out = [np.empty(size, dt) for dt in (np.int64, float, float, float, np.int64, np.uint64)]
    f, n = 0, 0
    while True:
        f, n, done = _fan_counts_nb(keys, *args, f, n, *out)
        if done:
            return out[0][:n], out[1][:n], out[2][:n], out[3][:n], out[4][:n]
        grown = []
        for arr in out:
            new = np.empty(2 * arr.size, arr.dtype)
            new[:n] = arr[:n]
            grown.append(new)
        out = grown


def _fan_counts_np(keys, a, gamma_min, n_max, T, L_fixed, literal, coef, tail):
    F = keys.size
    rate = a / (2.0 * gamma_min)
    with np.errstate(over="ignore", divide="ignore"):
        u1 = uniform(keys, counter(np.uint64(0), np.uint64(0)))
        u2 = uniform(keys, counter(np.uint64(0), np.uint64(1)))
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)
        if L_fixed > 0.0:
            L = np.full(F, L_fixed)
        else:
            E = -np.log(uniform(keys, counter(np.uint64(0), np.uint64(2))))
            L = a * E if literal else E / a
        life = np.where(z != 0.0, (L / np.where(z != 0.0, z, 1.0)) ** 2, np.inf)
        layer = dict(f=np.arange(F, dtype=np.int64), s=np.zeros(F), e=life, m=np.full(F, np.inf),
                     g=np.zeros(F, np.int64), k=keys.copy())
        out = [layer]
        for g in range(n_max):
            length = np.minimum(layer["e"], T) - layer["s"]
            lam = np.where(length > 0, rate * length, 0.0)
            K = _poisson_np(lam, layer["k"], 1)
            if K.sum() == 0:
                break
            par = np.repeat(np.arange(K.size), K)
            starts = np.cumsum(K) - K
            c = (np.arange(par.size) - np.repeat(starts, K)).astype(np.uint64)
            pk = layer["k"][par]
            tau = layer["s"][par] + length[par] * uniform(pk, counter(np.uint64(2), c))
            ck = child_key(pk, np.uint64(3), c)
            m = gamma_min / uniform(ck, counter(np.uint64(0), np.uint64(0)))
            acc = np.full(par.size, tail)
            for j in range(coef.size):
                w1 = uniform(ck, counter(np.uint64(0), np.uint64(1 + 2 * j)))
                w2 = uniform(ck, counter(np.uint64(0), np.uint64(2 + 2 * j)))
                acc = acc + coef[j] * (-np.log(w1 * w2))
            layer = dict(f=layer["f"][par], s=tau, e=tau + m * m * acc, m=np.minimum(layer["m"][par], m),
                         g=np.full(par.size, g + 1, np.int64), k=ck)
            out.append(layer)
    return tuple(np.concatenate([d[name] for d in out]) for name in ("f", "s", "e", "m", "g"))


@dataclass
class FanLifetimes:
    """Birth/death times of every excursion of F independent fans.

    ``mmin`` is the smallest maximum height along the excursion's ancestry
    (inf for ancestors); the excursion belongs to the fan truncated at
    ``gamma`` iff ``mmin >= gamma``.
    """

    fan: np.ndarray
    s: np.ndarray
    e: np.ndarray
    mmin: np.ndarray
    gen: np.ndarray
    n_fans: int
    a: float
    gamma_min: float
    n_max: int
    T: float

    def select(self, gamma=None, n_max=None):
        gamma = self.gamma_min if gamma is None else gamma
        if gamma < self.gamma_min * (1 - 1e-12):
            raise ValueError("gamma below the sampled cutoff")
        mask = self.mmin >= gamma
        if n_max is not None:
            mask &= self.gen <= n_max
        return mask

    def counts(self, t, gamma=None, n_max=None):
        mask = self.select(gamma, n_max) & (self.s < t) & (t < self.e)
        return np.bincount(self.fan[mask], minlength=self.n_fans)

    def generation_counts(self, t, gamma=None):
        mask = self.select(gamma) & (self.s < t) & (t < self.e)
        out = np.zeros((self.n_fans, self.n_max + 1), np.int64)
        np.add.at(out, (self.fan[mask], self.gen[mask]), 1)
        return out

    def workload(self, grid, gamma=None):
        """Exact W(t) = sum of lived time in [0, t], per fan, on ``grid``."""
        grid = np.asarray(grid, float)
        mask = self.select(gamma)
        f, s, e = self.fan[mask], self.s[mask], self.e[mask]
        W = np.zeros((self.n_fans, grid.size))
        for j, t in enumerate(grid):
            lived = np.clip(np.minimum(e, t) - s, 0.0, None)
            W[:, j] = np.bincount(f, weights=lived, minlength=self.n_fans)
        return W


def sample_fan_counts(n_fans, a, gamma_min, n_max, T, rng: RngStream, L=None, ancestor_convention="inverse",
                      n_terms=BES3_TERMS, backend=None):
    """Birth and death times of ``n_fans`` independent fans from x = 0.

    ``L`` fixes the ancestor's offset to its killing level; by default it is
    exponential (see ``draw_ancestor_tag``).
    """
    if not a > 0 or not gamma_min > 0:
        raise ValueError("a and gamma_min must be > 0")
    if ancestor_convention not in ("inverse", "literal"):
        raise ValueError("convention must be 'inverse' or 'literal'")
    keys = keys_for(rng.key, n_fans)
    coef, tail = _bes3_consts(n_terms)
    L_fixed = -1.0 if L is None else float(L)
    args = (keys, float(a), float(gamma_min), int(n_max), float(T), L_fixed, ancestor_convention == "literal",
            coef, tail)
    if _backend.resolve(backend) == "numba":
        out = _fan_counts_compiled(*args)
    else:
        out = _fan_counts_np(*args)
    f, s, e, m, g = out
    order = np.lexsort((s, g, f))
    return FanLifetimes(f[order], s[order], e[order], m[order], g[order], n_fans, float(a), float(gamma_min),
                        int(n_max), float(T))


def extrapolate_gamma(gammas, per_fan):
    """Least-squares line in gamma through per-fan values, evaluated at 0.

    ``per_fan`` has shape (n_fans, len(gammas)); the intercept is a fixed
    linear combination of the columns, so its stderr comes from the per-fan
    spread. Returns (estimate, stderr, per-gamma means).
    """
    g = np.asarray(gammas, float)
    X = np.column_stack([np.ones_like(g), g])
    w = np.linalg.pinv(X)[0]
    comb = np.asarray(per_fan, float) @ w
    n = comb.size
    return float(comb.mean()), float(comb.std(ddof=1) / math.sqrt(n)), np.asarray(per_fan, float).mean(axis=0)


def bes3_passage_times(n, rng: RngStream, n_terms=BES3_TERMS):
    """Samples of tau + tau' (two independent Bessel-3 passage times of level 1)."""
    gen = rng.generator()
    coef, tail = _bes3_consts(n_terms)
    return tail + gen.gamma(2.0, 1.0, size=(n, n_terms)) @ coef


def truncation_contraction_check(a, eta, samples, rng: RngStream, inner=400, T=1.0):
    """max over sampled parents w of (int F dQ(w, .)) / F(w) for
    F(w) = exp(-eta s(w)) (1 - exp(-eta |life(w)|)).

    Parents have a uniform start in [0, T] and the lifetime of an excursion
    conditioned to reach height 1. Birth times are integrated exactly; the
    child factor Q[1 - exp(-eta life)] = sqrt(pi eta) E sqrt(tau + tau') is
    estimated from ``inner`` passage-time draws per parent.
    """
    if not eta > 0:
        raise ValueError("eta must be > 0")
    if a == 0:
        return 0.0
    gen = rng.generator()
    s = T * gen.random(samples)
    life = (1.0 / gen.random(samples)) ** 2 * bes3_passage_times(samples, rng.child(1))
    F = np.exp(-eta * s) * -np.expm1(-eta * life)
    ratios = np.zeros(samples)
    for i in range(samples):
        if F[i] <= 0:
            continue
        births = F[i] / eta
        child = math.sqrt(math.pi * eta) * float(np.mean(np.sqrt(bes3_passage_times(inner, rng.child(2, i)))))
        ratios[i] = 0.5 * a * births * child / F[i]
    return float(ratios.max())


# ------------------------------------------------------- Bessel-3 batch stats

@njit
def _bes3_stats_nb(keys, gamma, h, n_steps, mid_step):
    n = keys.size
    life = np.empty(n)
    mid = np.full(n, np.nan)
    sq = math.sqrt(h)
    for i in range(n):
        key = keys[i]
        p0 = 0.0
        p1 = 0.0
        p2 = 0.0
        r = 0.0
        climbing = True
        life[i] = math.inf
        for k in range(1, n_steps + 1):
            ku = np.uint64(k)
            if climbing:
                for c in range(3):
                    a1 = uniform_nb(key, counter_nb(ku, 2 * c))
                    a2 = uniform_nb(key, counter_nb(ku, 2 * c + 1))
                    zz = math.sqrt(-2.0 * math.log(a1)) * math.cos(2.0 * math.pi * a2)
                    if c == 0:
                        p0 += sq * zz
                    elif c == 1:
                        p1 += sq * zz
                    else:
                        p2 += sq * zz
                r = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
                if r >= gamma:
                    climbing = False
            else:
                a1 = uniform_nb(key, counter_nb(ku, 0))
                a2 = uniform_nb(key, counter_nb(ku, 1))
                r += sq * math.sqrt(-2.0 * math.log(a1)) * math.cos(2.0 * math.pi * a2)
                if r <= 0.0:
                    life[i] = k * h
                    break
            if k == mid_step:
                mid[i] = r
    return life, mid


def _bes3_stats_np(keys, gamma, h, n_steps, mid_step):
    n = keys.size
    life = np.full(n, np.inf)
    mid = np.full(n, np.nan)
    sq = math.sqrt(h)
    p = np.zeros((3, n))
    r = np.zeros(n)
    climbing = np.ones(n, bool)
    alive = np.ones(n, bool)
    with np.errstate(over="ignore"):
        for k in range(1, n_steps + 1):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            ku = np.uint64(k)
            kk = keys[idx]
            cl = climbing[idx]
            ci = idx[cl]
            if ci.size:
                for c in range(3):
                    a1 = uniform(kk[cl], counter(ku, np.uint64(2 * c)))
                    a2 = uniform(kk[cl], counter(ku, np.uint64(2 * c + 1)))
                    p[c, ci] += sq * (np.sqrt(-2.0 * np.log(a1)) * np.cos(2.0 * math.pi * a2))
                r[ci] = np.sqrt(p[0, ci] * p[0, ci] + p[1, ci] * p[1, ci] + p[2, ci] * p[2, ci])
                climbing[ci[r[ci] >= gamma]] = False
            di = idx[~cl]
            if di.size:
                a1 = uniform(kk[~cl], counter(ku, np.uint64(0)))
                a2 = uniform(kk[~cl], counter(ku, np.uint64(1)))
                r[di] += sq * (np.sqrt(-2.0 * np.log(a1)) * np.cos(2.0 * math.pi * a2))
                dead = di[r[di] <= 0.0]
                life[dead] = k * h
                alive[dead] = False
            if k == mid_step:
                mid[alive] = r[alive]
    return life, mid


def bessel_excursion_stats(gamma, h, n, rng: RngStream, horizon=1.0, t_mid=0.25, backend=None):
    """Lifetimes (inf when alive at ``horizon``) and values at ``t_mid``
    (nan when dead by then) of ``n`` grid excursions conditioned on ``gamma``."""
    if not 0 < h <= gamma**2 / 100 * (1 + 1e-12):
        raise ValueError(f"grid step h={h} too coarse; need h <= gamma^2/100")
    n_steps = int(round(horizon / h))
    mid_step = int(round(t_mid / h))
    keys = keys_for(rng.key, n)
    if _backend.resolve(backend) == "numba":
        return _bes3_stats_nb(keys, float(gamma), float(h), n_steps, mid_step)
    return _bes3_stats_np(keys, float(gamma), float(h), n_steps, mid_step)
