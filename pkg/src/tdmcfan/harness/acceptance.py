"""The acceptance suite: one experiment config per criterion."""

from dataclasses import dataclass

from .config import ExperimentConfig
from .experiments import run_experiment


@dataclass
class Criterion:
    number: int
    title: str
    configs: list


def criteria(seed=20240611, out="acceptance-out"):
    def cfg(kind, **kw):
        return ExperimentConfig(kind=kind, seed=seed, out=out, **kw)

    return [
        Criterion(1, "TDMC estimator is unbiased against the weighted Monte Carlo oracle",
                  [cfg("unbiasedness", a=1.0, t=0.5, M=1000, replicas=100)]),
        Criterion(2, "mean particle count equals E exp(a y_t)",
                  [cfg("mean-count", a=1.0, t=0.5, eps=0.01, M=1000, replicas=100)]),
        Criterion(3, "gamma-extrapolated fan mean count matches exp(a^2 t/2)",
                  [cfg("fan-mean", a=1.0, t=0.5, n_max=6, replicas=10_000)]),
        Criterion(4, "integral of nu([s,inf)) G(s) equals 1/2",
                  [cfg("g-identity", dist=d) for d in ("standard-normal", "centered-uniform", "rademacher")]),
        Criterion(5, "hitting probabilities agree with the absorbing-chain solve",
                  [cfg("lattice-oracle", dist="rademacher")]),
        Criterion(6, "(gamma+s) P_{s,gamma} converges at rate gamma^-0.4",
                  [cfg("g-convergence")]),
        Criterion(7, "offspring-rate constant is a/(2 gamma), not the naive value",
                  [cfg("rate-constant", a=1.0, gamma=0.5, eps=1e-3, replicas=20_000, options={"T": 1.0})]),
        Criterion(8, "moments of N_t are stable in eps",
                  [cfg("moments", a=1.0, t=0.5, M=1000, replicas=100, options={"checks": ["moments"]})]),
        Criterion(9, "generation counts decay geometrically",
                  [cfg("moments", a=1.0, t=0.5, M=1000, replicas=100, options={"eps_list": [0.002], "checks": ["generations"]})]),
        Criterion(10, "Kolmogorov modulus exponent of the measure-valued path",
                  [cfg("kolmogorov", a=1.0, eps=1e-3, replicas=3000)]),
        Criterion(11, "conditioned walk excursions converge to the Bessel-3 construction",
                  [cfg("excursion-compare", gamma=0.5, h=1e-4)]),
        Criterion(12, "TDMC and fan particle counts have the same law",
                  [cfg("law-compare", a=1.0, t=0.5, eps=1e-3, n_max=6, replicas=5000)]),
        Criterion(13, "assignment distance equals brute force; interpolation contracts",
                  [cfg("distance")]),
        Criterion(14, "workload modulus statistic is stable across fans",
                  [cfg("workload", a=1.5, gamma=0.05, n_max=6, replicas=100, options={"T": 1.0})]),
    ]


def run_criterion(c: Criterion, jobs=None, write=False):
    manifests = [run_experiment(cfg, jobs=jobs, write=write) for cfg in c.configs]
    metrics = [m for man in manifests for m in man.metrics]
    return metrics, all(m.passed for m in metrics) and bool(metrics)
