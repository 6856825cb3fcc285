"""Experiment configuration and run manifests (JSON)."""

import json
import math
from dataclasses import asdict, dataclass, field, fields

from ..chain import StepDistribution

KINDS = (
    "unbiasedness", "mean-count", "fan-mean", "g-identity", "rate-constant", "moments", "kolmogorov",
    "law-compare", "excursion-compare", "distance", "lattice-oracle", "g-convergence", "workload",
)


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""

    def __init__(self, name, msg):
        super().__init__(f"{name}: {msg}")
        self.field = name


@dataclass
class ExperimentConfig:
    kind: str
    a: float = 1.0
    eps: float = 0.01
    t: float = 0.5
    gamma: float = 0.5
    n_max: int = 6
    h: float = 1e-4
    p: float = 0.5
    q: float = 2.0
    M: int = 1000
    replicas: int = 100
    dist: str = "standard-normal"
    seed: int = 0
    out: str = "out"
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
        checks = [
            ("a", self.a >= 0, "must be >= 0"),
            ("eps", self.eps > 0, "must be > 0"),
            ("t", self.t >= 0, "must be >= 0"),
            ("gamma", self.gamma > 0, "must be > 0"),
            ("n_max", isinstance(self.n_max, int) and self.n_max >= 0, "must be an integer >= 0"),
            ("h", self.h > 0, "must be > 0"),
            ("p", 0 < self.p <= 1, "must lie in (0, 1]"),
            ("q", self.q > 0, "must be > 0"),
            ("M", isinstance(self.M, int) and self.M >= 1, "must be an integer >= 1"),
            ("replicas", isinstance(self.replicas, int) and self.replicas >= 1, "must be an integer >= 1"),
            ("seed", isinstance(self.seed, int) and 0 <= self.seed < 2**64, "must be an unsigned 64-bit integer"),
            ("options", isinstance(self.options, dict), "must be an object"),
        ]
        for name, ok, msg in checks:
            value = getattr(self, name)
            if isinstance(value, float) and not math.isfinite(value):
                raise ConfigError(name, "must be finite")
            if not ok:
                raise ConfigError(name, msg)
        try:
            StepDistribution(self.dist)
        except ValueError as exc:
            raise ConfigError("dist", str(exc)) from None
        return self

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        if "kind" not in d:
            raise ConfigError("kind", "missing")
        cfg = cls(**d)
        for name in ("a", "eps", "t", "gamma", "h", "p", "q"):
            v = getattr(cfg, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(name, "must be a number")
            setattr(cfg, name, float(v))
        return cfg.validate()

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def opt(self, name, default):
        return self.options.get(name, default)


@dataclass
class Metric:
    name: str
    value: float
    stderr: float
    threshold: str
    passed: bool

    def __post_init__(self):
        # numpy scalars are not JSON serialisable
        self.value = float(self.value)
        self.stderr = math.nan if self.stderr is None else float(self.stderr)
        self.passed = bool(self.passed)

    def line(self):
        se = "" if self.stderr is None or (isinstance(self.stderr, float) and math.isnan(self.stderr)) \
            else f" +- {self.stderr:.4g}"
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} = {self.value:.6g}{se} ({self.threshold})"


@dataclass
class RunManifest:
    config: dict
    version: str
    wall_time: float
    seed: int
    metrics: list
    data_file: str = ""

    @property
    def passed(self):
        return all(m.passed for m in self.metrics)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self):
        return json.dumps(_finite(self.to_dict()), indent=2, sort_keys=True)


def _finite(obj):
    """JSON has no inf/nan; encode them as strings."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj
