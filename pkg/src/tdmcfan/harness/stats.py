"""Statistical comparators used by the experiments."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

MIN_KS_SIZE = 20
MIN_BOOTSTRAP = 1000


@dataclass
class StatReport:
    z_scores: dict = field(default_factory=dict)
    ks: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)


def z_score(est, se, target, target_se=0.0):
    denom = math.hypot(se, target_se)
    if denom == 0:
        return 0.0 if est == target else math.copysign(math.inf, est - target)
    return (est - target) / denom


def two_sample_ks(x, y):
    """Two-sample Kolmogorov-Smirnov statistic with asymptotic p-value."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < MIN_KS_SIZE or y.size < MIN_KS_SIZE:
        raise ValueError(f"two_sample_ks needs at least {MIN_KS_SIZE} points per sample")
    res = stats.ks_2samp(x, y, method="asymp")
    return float(res.statistic), float(min(1.0, max(0.0, res.pvalue)))


def loglog_slope(deltas, values):
    """Least-squares slope of log(values) on log(deltas) and its stderr."""
    d = np.asarray(deltas, float)
    v = np.asarray(values, float)
    if d.size < 2 or d.size != v.size:
        raise ValueError("need matching arrays with at least two points")
    if np.any(d <= 0) or np.any(v <= 0):
        raise ValueError("loglog_slope needs positive inputs")
    res = stats.linregress(np.log(d), np.log(v))
    se = float(res.stderr) if d.size > 2 else 0.0
    return float(res.slope), se


def bootstrap_ci(data, statistic=np.mean, n_resamples=MIN_BOOTSTRAP, level=0.95, seed=0):
    if n_resamples < MIN_BOOTSTRAP:
        raise ValueError(f"need at least {MIN_BOOTSTRAP} bootstrap resamples")
    res = stats.bootstrap((np.asarray(data, float),), statistic, n_resamples=n_resamples, confidence_level=level,
                          method="percentile", random_state=np.random.default_rng(seed))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def ks_rejection_rate(trials, n, level, rng: np.random.Generator, shift=0.0):
    """Fraction of trials in which U(0,1) vs U(shift, 1+shift) is rejected."""
    rejected = 0
    for _ in range(trials):
        _, p = two_sample_ks(rng.random(n), shift + rng.random(n))
        rejected += p < level
    return rejected / trials
