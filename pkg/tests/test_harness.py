import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdmcfan.harness import ConfigError, ExperimentConfig, run_experiment
from tdmcfan.harness.cli import main
from tdmcfan.harness.config import KINDS, RunManifest
from tdmcfan.harness.stats import bootstrap_ci, ks_rejection_rate, loglog_slope, two_sample_ks, z_score

configs = st.builds(
    ExperimentConfig,
    kind=st.sampled_from(KINDS),
    a=st.floats(0, 5),
    eps=st.floats(1e-6, 1),
    t=st.floats(0, 5),
    gamma=st.floats(1e-3, 10),
    n_max=st.integers(0, 10),
    h=st.floats(1e-8, 1),
    p=st.floats(1e-3, 1),
    q=st.floats(0.1, 4),
    M=st.integers(1, 10**6),
    replicas=st.integers(1, 10**5),
    dist=st.sampled_from(["standard-normal", "rademacher", "centered-uniform", "two-sided-exponential-normalized"]),
    seed=st.integers(0, 2**64 - 1),
    out=st.text(min_size=1, max_size=10),
    options=st.dictionaries(st.text(max_size=5), st.integers() | st.floats(allow_nan=False) | st.text(max_size=5),
                            max_size=3),
)


@given(configs)
def test_config_roundtrip(cfg):
    assert ExperimentConfig.from_json(cfg.validate().to_json()) == cfg


@pytest.mark.parametrize("field,value", [("eps", 0.0), ("eps", -1.0), ("p", 1.5), ("M", 0), ("seed", -1),
                                         ("gamma", math.nan), ("kind", "nope"), ("dist", "cauchy")])
def test_validation_names_field(field, value):
    cfg = ExperimentConfig(kind="unbiasedness")
    setattr(cfg, field, value)
    with pytest.raises(ConfigError) as exc:
        cfg.validate()
    assert exc.value.field == field and str(exc.value).startswith(field + ":")


def test_unknown_field_rejected():
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict({"kind": "distance", "epsilon": 1})
    assert exc.value.field == "epsilon"


def test_ks_examples():
    x = np.linspace(0, 1, 100)
    assert two_sample_ks(x, x) == (0.0, 1.0)
    with pytest.raises(ValueError):
        two_sample_ks(x[:10], x)
    g = np.random.default_rng(0)
    assert two_sample_ks(g.random(2000), 0.2 + g.random(2000))[1] < 1e-6


def test_ks_calibration():
    rate = ks_rejection_rate(500, 2000, 0.01, np.random.default_rng(1))
    assert abs(rate - 0.01) <= 3 * math.sqrt(0.01 * 0.99 / 500)


def test_loglog_and_bootstrap():
    d = np.array([0.1, 0.01, 0.001])
    assert loglog_slope(d, d)[0] == pytest.approx(1.0, abs=1e-12)
    assert loglog_slope(d, np.sqrt(d))[0] == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        loglog_slope(d, -d)
    lo, hi = bootstrap_ci(np.random.default_rng(2).normal(size=500))
    assert lo < 0 < hi
    with pytest.raises(ValueError):
        bootstrap_ci([1.0, 2.0], n_resamples=10)
    assert z_score(1.0, 0.5, 0.0) == 2.0


def _small(kind, out, seed=3, **kw):
    base = dict(unbiasedness=dict(M=100, replicas=4, options={"eps_list": [0.01], "oracle_samples": 20000}),
                distance=dict(options={"instances": 20}),
                **{"fan-mean": dict(replicas=500)})
    args = dict(base.get(kind, {}))
    args.update(kw)
    return ExperimentConfig(kind=kind, seed=seed, out=str(out), **args)


def test_run_writes_csv_and_manifest(tmp_path):
    man = run_experiment(_small("fan-mean", tmp_path))
    assert (tmp_path / "fan-mean.csv").exists()
    data = json.loads((tmp_path / "fan-mean.manifest.json").read_text())
    assert data["seed"] == 3 and data["config"]["kind"] == "fan-mean" and "version" in data
    for m in data["metrics"]:
        assert {"value", "stderr", "threshold", "passed"} <= set(m)
    assert isinstance(man, RunManifest)


@pytest.mark.parametrize("kind", ["unbiasedness", "fan-mean", "distance"])
def test_byte_identical_and_jobs_independent(tmp_path, kind):
    run_experiment(_small(kind, tmp_path / "a"), jobs=1)
    run_experiment(_small(kind, tmp_path / "b"), jobs=1)
    run_experiment(_small(kind, tmp_path / "c"), jobs=2)
    ref = (tmp_path / "a" / f"{kind}.csv").read_bytes()
    assert (tmp_path / "b" / f"{kind}.csv").read_bytes() == ref
    assert (tmp_path / "c" / f"{kind}.csv").read_bytes() == ref


def test_seed_changes_output(tmp_path):
    run_experiment(_small("fan-mean", tmp_path / "a", seed=1))
    run_experiment(_small("fan-mean", tmp_path / "b", seed=2))
    assert (tmp_path / "a" / "fan-mean.csv").read_bytes() != (tmp_path / "b" / "fan-mean.csv").read_bytes()


def test_cli_run_and_exit_codes(tmp_path, capsys):
    cfg = _small("fan-mean", tmp_path / "o")
    cfg.save(tmp_path / "c.json")
    assert main(["run", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) in (0, 1)
    assert (tmp_path / "o" / "fan-mean.manifest.json").exists()
    bad = cfg.to_dict()
    bad["eps"] = -1
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["run", "--config", str(tmp_path / "bad.json")]) == 2
    assert "eps" in capsys.readouterr().err


def test_cli_distance(tmp_path):
    from tdmcfan.lpspace import PointMeasure
    PointMeasure([0.0], [1.0], [0]).to_csv(tmp_path / "mu.csv")
    PointMeasure.empty().to_csv(tmp_path / "nu.csv")
    rc = main(["distance", "--mu", str(tmp_path / "mu.csv"), "--nu", str(tmp_path / "nu.csv"), "-p", "1",
               "--out", str(tmp_path)])
    assert rc == 0
    assert "0.7071067811865" in (tmp_path / "distance.csv").read_text()


def test_cli_calibrate(tmp_path):
    assert main(["calibrate-ks", "--trials", "500", "--n", "2000", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "calibrate-ks.json").read_text())
    assert rep["calibrated"] and rep["powerful"]


def test_cli_verify_subset(tmp_path):
    assert main(["verify", "--only", "5", "13", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["passed"] and [c["criterion"] for c in rep["criteria"]] == [5, 13]
