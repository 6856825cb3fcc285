from .config import ConfigError, ExperimentConfig, Metric, RunManifest
from .stats import StatReport, bootstrap_ci, loglog_slope, two_sample_ks, z_score

__all__ = ["ConfigError", "ExperimentConfig", "Metric", "RunManifest", "StatReport", "bootstrap_ci", "loglog_slope",
           "two_sample_ks", "z_score", "run_experiment"]


def run_experiment(cfg, jobs=None, write=True):
    from .experiments import run_experiment as _run
    return _run(cfg, jobs=jobs, write=write)
