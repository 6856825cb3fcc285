"""Ticketed diffusion Monte Carlo, the truncated Brownian fan, first-passage
statistics of random walks and the lp transport metric on tagged points."""

__version__ = "0.1.0"

from .chain import ChainParams, Potential, StepDistribution, walk_path, weighted_mc_estimate  # noqa: E402
from .lpspace import DELTA, PointMeasure, TaggedPoint, lp_distance  # noqa: E402
from ._rng import RngStream  # noqa: E402
