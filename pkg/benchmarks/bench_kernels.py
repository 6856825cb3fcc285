"""Wall-clock comparison of the numba and numpy backends on each hot kernel.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]
The numba column excludes compilation (one warm-up call per kernel).
"""

import argparse
import time

import numpy as np

from tdmcfan import ChainParams, Potential, RngStream, StepDistribution
from tdmcfan._backend import HAVE_NUMBA
from tdmcfan.fan import bessel_excursion_stats, sample_fan_counts
from tdmcfan.hitting import conditioned_excursion_stats, corridor_batch
from tdmcfan.tdmc import offspring_rate_experiment, run_tdmc


def kernels(scale):
    normal = StepDistribution("standard-normal")
    n = lambda k: max(1, int(k * scale))  # noqa: E731
    return {
        "tdmc": lambda b, r: run_tdmc(0.5, n(2000), Potential.linear(1.0), ChainParams(0.01), normal, r,
                                      backend=b).final.N,
        "rate": lambda b, r: offspring_rate_experiment(1.0, 0.5, 1.0, 1e-3, normal, n(500), r, backend=b)[0],
        "corridor": lambda b, r: corridor_batch(16.0, 4.0, normal, n(20_000), r, backend=b).hit.sum(),
        "fan_counts": lambda b, r: sample_fan_counts(n(5000), 1.0, 0.05, 6, 0.5, r, backend=b).s.size,
        "bes3": lambda b, r: np.isfinite(bessel_excursion_stats(0.5, 2.5e-3, n(2000), r, backend=b)[0]).sum(),
        "cond_walk": lambda b, r: np.isfinite(conditioned_excursion_stats(0.0, 0.5, 1e-3, normal, n(500), r,
                                                                          backend=b)[0]).sum(),
    }


def bench(fn, backend, repeat):
    rng = RngStream(7)
    fn(backend, rng)  # warm-up and compile
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(backend, rng)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'kernel':<12}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  same")
    for name, fn in kernels(args.scale).items():
        res = {b: bench(fn, b, args.repeat) for b in backends}
        times = "".join(f"{res[b][0]:>11.3f}s" for b in backends)
        speed = res["numpy"][0] / res["numba"][0] if len(backends) == 2 else float("nan")
        same = len({repr(res[b][1]) for b in backends}) == 1
        print(f"{name:<12}{times}{speed:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
