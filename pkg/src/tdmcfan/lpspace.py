"""Finite tagged-point measures on M = {(x, v): v > -a x} with the
boundary-absorbing transport distance and its linear interpolation."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

TIE_TOL = 1e-12


@dataclass(frozen=True)
class TaggedPoint:
    x: float = 0.0
    v: float = 0.0
    n: int = 0
    is_delta: bool = False

    def __post_init__(self):
        if not self.is_delta and not (math.isfinite(self.x) and math.isfinite(self.v)):
            raise ValueError("tagged point coordinates must be finite")


DELTA = TaggedPoint(is_delta=True)


def in_M(x, v, a):
    return np.asarray(v) > -a * np.asarray(x)


def dist_to_boundary(X, a, form="euclidean"):
    """Distance from (x, v) to the line v = -a x; Delta is at distance 0.

    ``form="barrier"`` returns |x + v/a|, the distance measured along x
    to the killing level -v/a; it differs from the Euclidean form by the
    constant a / sqrt(1 + a^2).
    """
    if isinstance(X, TaggedPoint):
        if X.is_delta:
            return 0.0
        return float(_boundary(np.float64(X.x), np.float64(X.v), a, form))
    x, v = X
    return _boundary(np.asarray(x, float), np.asarray(v, float), a, form)


def _boundary(x, v, a, form):
    if form == "euclidean":
        return np.abs(v + a * x) / math.sqrt(1.0 + a * a)
    if form == "barrier":
        if a <= 0:
            raise ValueError("barrier-coordinate distance needs a > 0")
        return np.abs(x + v / a)
    raise ValueError(f"unknown boundary form {form!r}")


def dp(X: TaggedPoint, Y: TaggedPoint, p, a):
    """Ground cost between two tagged points (either may be Delta)."""
    dX = dist_to_boundary(X, a) ** p
    dY = dist_to_boundary(Y, a) ** p
    if X.is_delta or Y.is_delta or X.n != Y.n:
        return dX + dY
    direct = math.hypot(X.x - Y.x, X.v - Y.v) ** p
    return min(direct, dX + dY)


class PointMeasure:
    """Finite multiset of tagged points; Delta entries are not stored."""

    def __init__(self, x=(), v=(), n=(), a=1.0, p=1.0, check=True):
        self.x = np.asarray(x, dtype=float).reshape(-1)
        self.v = np.asarray(v, dtype=float).reshape(-1)
        self.n = np.asarray(n, dtype=np.int64).reshape(-1)
        self.a = float(a)
        self.p = float(p)
        if not (self.x.size == self.v.size == self.n.size):
            raise ValueError("x, v, n must have equal length")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if check and self.x.size and not np.all(in_M(self.x, self.v, self.a)):
            raise ValueError("points must satisfy v > -a x")

    @classmethod
    def from_points(cls, points, a=1.0, p=1.0):
        pts = [q for q in points if not q.is_delta]
        return cls([q.x for q in pts], [q.v for q in pts], [q.n for q in pts], a, p)

    @classmethod
    def empty(cls, a=1.0, p=1.0):
        return cls(a=a, p=p)

    @property
    def count(self):
        return int(self.x.size)

    def __len__(self):
        return self.count

    @property
    def points(self):
        return [TaggedPoint(float(x), float(v), int(n)) for x, v, n in zip(self.x, self.v, self.n)]

    def boundary_distances(self):
        return dist_to_boundary((self.x, self.v), self.a)

    def norm(self):
        return float(np.sum(self.boundary_distances() ** self.p))

    def sorted(self):
        order = np.lexsort((self.n, self.v, self.x))
        return PointMeasure(self.x[order], self.v[order], self.n[order], self.a, self.p, check=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "v", "n"])
            for x, v, n in zip(self.x, self.v, self.n):
                w.writerow([repr(float(x)), repr(float(v)), int(n)])

    @classmethod
    def from_csv(cls, path, a=1.0, p=1.0):
        rows = list(csv.DictReader(Path(path).open()))
        return cls([float(r["x"]) for r in rows], [float(r["v"]) for r in rows], [int(r["n"]) for r in rows], a, p)

    def __repr__(self):
        return f"PointMeasure(count={self.count}, a={self.a}, p={self.p})"


def cost_matrix(mu: PointMeasure, nu: PointMeasure, p, a):
    """Square cost matrix after padding the smaller side with Delta."""
    N, M = mu.count, nu.count
    size = max(N, M)
    dmu = np.zeros(size)
    dnu = np.zeros(size)
    dmu[:N] = dist_to_boundary((mu.x, mu.v), a) ** p
    dnu[:M] = dist_to_boundary((nu.x, nu.v), a) ** p
    C = dmu[:, None] + dnu[None, :]
    if N and M:
        direct = np.hypot(mu.x[:, None] - nu.x[None, :], mu.v[:, None] - nu.v[None, :]) ** p
        same = mu.n[:, None] == nu.n[None, :]
        block = C[:N, :M]
        C[:N, :M] = np.where(same, np.minimum(direct, block), block)
    return C


def lp_distance(mu: PointMeasure, nu: PointMeasure, p=None, a=None):
    p = mu.p if p is None else p
    a = mu.a if a is None else a
    if mu.count == 0 and nu.count == 0:
        return 0.0
    C = cost_matrix(mu, nu, p, a)
    r, c = linear_sum_assignment(C)
    return _total(mu, nu, p, a, r, c)


def _total(mu, nu, p, a, rows, cols):
    """Matching cost as a correctly rounded sum of elementary terms (one per
    boundary leg, one per direct pair), so tied matchings and swapped
    arguments give bit-identical values."""
    N, M = mu.count, nu.count
    dmu = dist_to_boundary((mu.x, mu.v), a) ** p
    dnu = dist_to_boundary((nu.x, nu.v), a) ** p
    terms = []
    for i, j in zip(rows, cols):
        if i < N and j < M and mu.n[i] == nu.n[j]:
            direct = math.hypot(mu.x[i] - nu.x[j], mu.v[i] - nu.v[j]) ** p
            if direct < dmu[i] + dnu[j]:
                terms.append(direct)
                continue
        if i < N:
            terms.append(dmu[i])
        if j < M:
            terms.append(dnu[j])
    return math.fsum(terms)


def optimal_matching(mu: PointMeasure, nu: PointMeasure, p=None, a=None):
    """Optimal permutation of the padded problem, lexicographically smallest among ties.

    Row i is matched to column sigma[i]; indices >= count denote Delta.
    """
    p = mu.p if p is None else p
    a = mu.a if a is None else a
    C = cost_matrix(mu, nu, p, a)
    size = C.shape[0]
    if size == 0:
        return np.zeros(0, np.int64), C
    r, c = linear_sum_assignment(C)
    best = C[r, c].sum()
    tol = TIE_TOL * max(1.0, abs(best))
    sigma = np.empty(size, np.int64)
    rows = list(range(size))
    cols = list(range(size))
    fixed = 0.0
    for i in range(size):
        rest_rows = rows[1:]
        for j in sorted(cols):
            rest_cols = [q for q in cols if q != j]
            if rest_rows:
                sub = C[np.ix_(rest_rows, rest_cols)]
                rr, cc = linear_sum_assignment(sub)
                rest = sub[rr, cc].sum()
            else:
                rest = 0.0
            if fixed + C[i, j] + rest <= best + tol:
                sigma[i] = j
                fixed += C[i, j]
                cols = rest_cols
                rows = rest_rows
                break
        else:  # pragma: no cover - the optimum always admits an extension
            raise RuntimeError("tie-breaking failed to extend an optimal matching")
    return sigma, C


def _project(x, v, a):
    g = (v + a * x) / (1.0 + a * a)
    return x - g * a, v - g


def _lerp(x, y, t):
    # anchored at the nearer end: exact at t = 0, t = 1 and when x == y
    return x + t * (y - x) if t <= 0.5 else y + (1.0 - t) * (x - y)


def interpolate(mu: PointMeasure, nu: PointMeasure, t, p=None, a=None):
    """Linear interpolation along the optimal matching.

    Directly matched pairs move on straight segments; a point whose partner
    is Delta, or whose pair is cheaper through the boundary, slides to or
    from its boundary projection. Points that sit on the boundary are dropped.
    """
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    p = mu.p if p is None else p
    a = mu.a if a is None else a
    N, M = mu.count, nu.count
    sigma, _ = optimal_matching(mu, nu, p, a)
    xs, vs, ns = [], [], []

    def leaving(i):
        px, pv = _project(mu.x[i], mu.v[i], a)
        xs.append(_lerp(mu.x[i], px, t))
        vs.append(_lerp(mu.v[i], pv, t))
        ns.append(mu.n[i])

    def arriving(j):
        px, pv = _project(nu.x[j], nu.v[j], a)
        xs.append(_lerp(px, nu.x[j], t))
        vs.append(_lerp(pv, nu.v[j], t))
        ns.append(nu.n[j])

    for i, j in enumerate(sigma):
        if i < N and j < M:
            X = TaggedPoint(mu.x[i], mu.v[i], int(mu.n[i]))
            Y = TaggedPoint(nu.x[j], nu.v[j], int(nu.n[j]))
            direct = math.hypot(X.x - Y.x, X.v - Y.v) ** p
            via = dist_to_boundary(X, a) ** p + dist_to_boundary(Y, a) ** p
            if X.n == Y.n and direct <= via:
                xs.append(_lerp(X.x, Y.x, t))
                vs.append(_lerp(X.v, Y.v, t))
                ns.append(X.n)
            else:
                leaving(i)
                arriving(j)
        elif i < N:
            leaving(i)
        elif j < M:
            arriving(j)
    x = np.asarray(xs, float)
    v = np.asarray(vs, float)
    n = np.asarray(ns, np.int64)
    # drop points that reached the boundary, allowing for projection round-off
    keep = (v + a * x) > 1e-12 * (1.0 + np.abs(v) + np.abs(a * x))
    return PointMeasure(x[keep], v[keep], n[keep], a, p, check=False)
