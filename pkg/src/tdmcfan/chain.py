"""Underlying Markov dynamics: step laws, potentials, the Euler scheme and the
direct weighted Monte Carlo estimate of a Feynman-Kac expectation."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from ._backend import njit
from ._rng import RngStream

SQRT3 = math.sqrt(3.0)
LAPLACE_SCALE = 1.0 / math.sqrt(2.0)
TWO_PI = 2.0 * math.pi

NORMAL, RADEMACHER, UNIFORM, LAPLACE = 0, 1, 2, 3
_KINDS = {
    "standard-normal": NORMAL,
    "rademacher": RADEMACHER,
    "centered-uniform": UNIFORM,
    "two-sided-exponential-normalized": LAPLACE,
}
_ALIASES = {"normal": "standard-normal", "uniform": "centered-uniform", "laplace": "two-sided-exponential-normalized",
            "two-sided-exponential": "two-sided-exponential-normalized"}


def from_uniforms(code, u1, u2):
    """Map two uniforms in (0,1) to one unit-variance step (arrays)."""
    if code == NORMAL:
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
    if code == RADEMACHER:
        return np.where(u1 < 0.5, 1.0, -1.0)
    if code == UNIFORM:
        return SQRT3 * (2.0 * u1 - 1.0)
    if code == LAPLACE:
        lo = u1 < 0.5
        safe = np.where(lo, 2.0 * u1, 2.0 * (1.0 - u1))
        mag = LAPLACE_SCALE * np.log(safe)
        return np.where(lo, mag, -mag)
    raise ValueError(f"unknown distribution code {code}")


@njit
def from_uniforms_nb(code, u1, u2):
    if code == 0:
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
    if code == 1:
        return 1.0 if u1 < 0.5 else -1.0
    if code == 2:
        return SQRT3 * (2.0 * u1 - 1.0)
    if u1 < 0.5:
        return LAPLACE_SCALE * np.log(2.0 * u1)
    return -(LAPLACE_SCALE * np.log(2.0 * (1.0 - u1)))


@dataclass(frozen=True)
class StepDistribution:
    """One-step law of the rescaled walk; every kind has mean 0 and variance 1."""

    kind: str = "standard-normal"

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in _KINDS:
            raise ValueError(f"unknown step distribution {self.kind!r}; choose from {sorted(_KINDS)}")
        object.__setattr__(self, "kind", kind)

    @property
    def code(self):
        return _KINDS[self.kind]

    @property
    def lattice(self):
        return self.code == RADEMACHER

    def from_uniforms(self, u1, u2):
        return from_uniforms(self.code, np.asarray(u1, float), np.asarray(u2, float))

    def draw(self, gen, size):
        """Draws from a numpy Generator (used where per-lineage keys are not needed)."""
        c = self.code
        if c == NORMAL:
            return gen.standard_normal(size)
        if c == RADEMACHER:
            return 2.0 * gen.integers(0, 2, size=size) - 1.0
        if c == UNIFORM:
            return gen.uniform(-SQRT3, SQRT3, size)
        return gen.laplace(0.0, LAPLACE_SCALE, size)

    def tail(self, s):
        """nu([s, inf)) in closed form."""
        s = np.asarray(s, dtype=float)
        c = self.code
        if c == NORMAL:
            return stats.norm.sf(s)
        if c == RADEMACHER:
            return np.where(s <= -1.0, 1.0, np.where(s <= 1.0, 0.5, 0.0))
        if c == UNIFORM:
            return np.clip((SQRT3 - s) / (2.0 * SQRT3), 0.0, 1.0)
        return np.where(s <= 0.0, 1.0 - 0.5 * np.exp(s / LAPLACE_SCALE), 0.5 * np.exp(-s / LAPLACE_SCALE))

    def mgf(self, c):
        """E exp(c * xi)."""
        c = float(c)
        k = self.code
        if k == NORMAL:
            return math.exp(0.5 * c * c)
        if k == RADEMACHER:
            return math.cosh(c)
        if k == UNIFORM:
            z = SQRT3 * c
            return 1.0 if z == 0.0 else math.sinh(z) / z
        if abs(c) >= 1.0 / LAPLACE_SCALE:
            return math.inf
        return 1.0 / (1.0 - (LAPLACE_SCALE * c) ** 2)

    def expect(self, g, lower=-math.inf):
        """E[g(xi); xi > lower] by quadrature (exact sum for the two-point law)."""
        from scipy import integrate

        c = self.code
        if c == RADEMACHER:
            return sum(0.5 * g(z) for z in (-1.0, 1.0) if z > lower)
        if c == UNIFORM:
            lo = max(lower, -SQRT3)
            if lo >= SQRT3:
                return 0.0
            val, _ = integrate.quad(lambda z: g(z) / (2.0 * SQRT3), lo, SQRT3, limit=200)
            return val
        if c == NORMAL:
            pdf = stats.norm.pdf
        else:
            pdf = stats.laplace(scale=LAPLACE_SCALE).pdf
        # split at the Laplace kink
        val = 0.0
        for lo, hi in ((max(lower, -40.0), 0.0), (max(lower, 0.0), 40.0)):
            if lo < hi:
                val += integrate.quad(lambda z: g(z) * pdf(z), lo, hi, limit=400)[0]
        return val


class Potential:
    """V with the telescoping weight chi(x, y) = V(y) - V(x)."""

    def __init__(self, V: Callable, slope: Optional[float] = None, kind: str = "custom"):
        self._V = V
        self.slope = slope
        self.kind = kind

    @classmethod
    def linear(cls, a):
        a = float(a)
        if a < 0:
            raise ValueError("linear potential slope a must be >= 0")
        return cls(lambda x: -a * np.asarray(x, dtype=float), slope=a, kind="linear")

    @classmethod
    def zero(cls):
        return cls.linear(0.0)

    @property
    def is_linear(self):
        return self.kind == "linear"

    def V(self, x):
        return self._V(x)

    def chi(self, x, y):
        return self.V(y) - self.V(x)

    def __repr__(self):
        return f"Potential.linear({self.slope})" if self.is_linear else "Potential(custom)"


@dataclass
class ChainParams:
    eps: float
    dim: int = 1
    drift: Optional[Callable] = field(default=None, repr=False)
    diffusion: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def plain(self):
        """True for the F = 0, Sigma = 1 walk the kernels are specialised to."""
        return self.drift is None and self.diffusion is None

    def n_steps(self, t):
        n = round(t / self.eps)
        if n < 0 or abs(n * self.eps - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not an integer multiple of eps={self.eps}")
        return int(n)

    def update(self, y, xi):
        sq = math.sqrt(self.eps)
        if self.plain:
            return y + sq * xi
        out = y
        if self.drift is not None:
            out = out + self.eps * self.drift(y)
        sig = 1.0 if self.diffusion is None else self.diffusion(y)
        if self.dim > 1 and np.ndim(sig) == 2:
            return out + sq * (np.asarray(sig) @ np.asarray(xi))
        return out + sq * sig * xi


def sample_step(dist: StepDistribution, rng: RngStream):
    u = rng.random(2)
    return float(dist.from_uniforms(u[0], u[1]))


def walk_path(x0, params: ChainParams, n_steps, dist: StepDistribution, rng: RngStream):
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    u = rng.random(2 * n_steps).reshape(n_steps, 2) if n_steps else np.empty((0, 2))
    xi = dist.from_uniforms(u[:, 0], u[:, 1])
    path = np.empty(n_steps + 1)
    path[0] = x0
    path[1:] = x0 + np.cumsum(math.sqrt(params.eps) * xi)
    return path


def euler_step(state, params: ChainParams, dist: StepDistribution, rng: RngStream = None, xi=None):
    """One step y + eps F(y) + sqrt(eps) Sigma(y) xi; ``xi`` may be supplied directly."""
    y = np.asarray(state, dtype=float)
    if xi is None:
        if rng is None:
            raise ValueError("need either rng or xi")
        u = rng.random(2 * params.dim).reshape(2, params.dim)
        xi = dist.from_uniforms(u[0], u[1])
        if params.dim == 1 and y.ndim == 0:
            xi = float(xi[0])
    return params.update(y, xi)


def weighted_mc_estimate(f, t, M, potential: Potential, params: ChainParams, dist: StepDistribution,
                         rng: RngStream, x0=0.0, chunk=200_000):
    """Plain Monte Carlo for E f(y_t) exp(-sum chi).

    The weight telescopes to exp(V(y_0) - V(y_t)) and is carried in log space.
    Returns ``(mean, stderr)``; if ``f`` is a list of callables, a list of
    such pairs computed on the same paths.
    """
    fs = list(f) if isinstance(f, (list, tuple)) else [f]
    n = params.n_steps(t)
    if M < 2:
        raise ValueError("M must be >= 2")
    gen = rng.generator()
    vals = [[] for _ in fs]
    logw = []
    done = 0
    while done < M:
        m = min(chunk, M - done)
        y = np.full(m, float(x0))
        if params.plain:
            for _ in range(n):
                y += math.sqrt(params.eps) * dist.draw(gen, m)
        else:
            for _ in range(n):
                y = params.update(y, dist.draw(gen, m))
        for acc, fn in zip(vals, fs):
            acc.append(np.asarray(fn(y), dtype=float) * np.ones(m))
        logw.append(potential.V(np.full(m, float(x0))) - potential.V(y))
        done += m
    logw = np.concatenate(logw)
    shift = float(np.max(logw))
    w = np.exp(logw - shift)
    scale = math.exp(shift)
    out = []
    for acc in vals:
        terms = np.concatenate(acc) * w
        out.append((scale * float(np.mean(terms)), scale * float(np.std(terms, ddof=1)) / math.sqrt(M)))
    return out if isinstance(f, (list, tuple)) else out[0]


def exact_mean_weight(dist: StepDistribution, a, eps, n_steps):
    """E exp(a y_t) for the walk from 0: (E exp(a sqrt(eps) xi))^n."""
    return dist.mgf(a * math.sqrt(eps)) ** n_steps
