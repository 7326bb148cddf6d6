import json
import math

import numpy as np
import pytest

from lotci.core import Model
from lotci.design import Region
from lotci.harness import (
    ConfigError,
    ExperimentConfig,
    MethodSpec,
    load_config,
    run_ci_experiment,
    run_experiment,
    run_test_experiment,
    seed_plan,
)
from lotci.models import REGISTRY


class ConstantModel(Model):
    """Every resample reproduces the truth exactly."""

    name = "constant"
    labels = ("theta",)

    def __init__(self, n: int = 5, fail_on: tuple = ()):
        self.n = n
        self.fail_on = set(fail_on)

    def generate(self, rng):
        return float(rng.integers(0, 1000))

    def truth(self):
        return np.array([1.0])

    def estimate(self, data):
        if data in self.fail_on:
            raise FloatingPointError("stub failure")
        return np.array([1.0])

    def simulate(self, data, phi, size, rng, n=None):
        return np.zeros(size)

    def observed(self, data):
        return np.zeros(1)

    def statistic(self, data, batch):
        return np.zeros(len(batch))

    def target(self, phi):
        return float(phi[0])

    def target_estimate(self, data, batch, phi=None):
        return np.ones(len(batch))

    def point_estimate(self, data):
        if data in self.fail_on:
            raise FloatingPointError("stub failure")
        return 1.0

    def neighborhood(self, data, theta_hat, delta=None):
        return Region([0.5], [1.5], labels=self.labels)

    def sample_size(self, data):
        return self.n


@pytest.fixture
def stub(monkeypatch):
    monkeypatch.setitem(REGISTRY, "constant", ConstantModel)


def ci_cfg(**kw):
    base = dict(model="normal", model_config={"n": 50}, methods=[{"name": "bootstrap"}], reps=20, M=200, seed=1)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_degenerate_stub_covers_with_zero_length(stub):
    cfg = ci_cfg(model="constant", model_config={}, methods=[{"name": "bootstrap"}, {"name": "loci-nb"}], reps=15)
    rep = run_ci_experiment(cfg)
    for m in ("bootstrap", "loci-nb"):
        assert rep.value(m, "CR") == 1.0
        assert rep.value(m, "ML") == 0.0


def test_constant_statistic_never_rejects(stub):
    cfg = ExperimentConfig.from_dict(dict(model="constant", kind="test", methods=[{"name": "bootstrap"}], reps=10,
                                          M=50, alpha=[0.05, 0.1]))
    rep = run_test_experiment(cfg)
    assert rep.value("bootstrap", "rejection_rate@alpha=0.05") == 0.0
    assert rep.value("bootstrap", "rejection_rate@alpha=0.1") == 0.0


def test_skipped_replications_are_counted(stub, monkeypatch):
    plan = seed_plan(4)
    data = [ConstantModel().generate(plan.data(0, r)) for r in range(12)]
    fail = (data[2], data[7])
    cfg = ci_cfg(model="constant", model_config={"fail_on": fail}, methods=[{"name": "loci-nb"}], reps=12, seed=4)
    rep = run_experiment(cfg)
    n_fail = sum(d in fail for d in data)
    row = rep.row("loci-nb", "CR")
    assert row["reps"] == 12 - n_fail
    assert f"skipped={n_fail}" in row["warnings"]
    assert rep.details["loci-nb"]["skipped_count"] == n_fail


def test_normal_bootstrap_coverage():
    cfg = ci_cfg(model_config={"n": 200, "mu": 0.3}, reps=2000, M=999, seed=7)
    cr = run_experiment(cfg).value("bootstrap", "CR")
    assert abs(cr - 0.95) <= 0.02


def test_exact_binomial_lot_is_valid():
    cfg = ExperimentConfig.from_dict(dict(model="binomial", model_config={"n": 20, "pi": 0.5}, kind="test",
                                          methods=[{"name": "lot-nb"}], reps=600, M=400, alpha=[0.05, 0.1], seed=3))
    rep = run_experiment(cfg)
    for a in (0.05, 0.1):
        r = rep.value("lot-nb", f"rejection_rate@alpha={a:g}")
        assert r <= a + 3 * math.sqrt(a * (1 - a) / 600)


def test_same_seed_same_csv_and_seed_matters():
    cfg = ci_cfg(model_config={"n": 30, "known_sigma": False}, methods=[{"name": "bootstrap"}, {"name": "loci-nb"}])
    a = run_experiment(cfg).to_csv()
    assert a == run_experiment(cfg).to_csv()
    other = ci_cfg(model_config={"n": 30, "known_sigma": False}, methods=[{"name": "bootstrap"}, {"name": "loci-nb"}],
                   seed=2)
    assert a != run_experiment(other).to_csv()


def test_thread_count_does_not_change_output():
    cfg = ci_cfg(model="multinomial", model_config={"n": 30}, methods=[{"name": "bootstrap"}, {"name": "loci-nb"}],
                 reps=16, M=200, seed=9)
    assert run_experiment(cfg, threads=1).to_csv() == run_experiment(cfg, threads=8).to_csv()


def test_loci_never_shorter_than_bootstrap():
    cfg = ci_cfg(model_config={"n": 40, "known_sigma": False}, methods=[{"name": "bootstrap"}, {"name": "loci-nb"}],
                 reps=30, M=300, seed=5)
    rep = run_experiment(cfg)
    boot = np.array(rep.details["bootstrap"]["lengths"])
    loci = np.array(rep.details["loci-nb"]["lengths"])
    assert np.all(loci >= boot - 1e-12)


def test_common_random_numbers_toggle():
    crn, ind = seed_plan(3, True), seed_plan(3, False)
    assert crn.resamples(0, 1, 0).key == crn.resamples(0, 1, 2).key
    assert ind.resamples(0, 1, 0).key != ind.resamples(0, 1, 2).key
    assert np.array_equal(crn.data(0, 4).random(3), ind.data(0, 4).random(3))


def test_scenario_metric_names():
    cfg = ExperimentConfig.from_dict(dict(model="normal", model_config={"n": 30}, kind="test",
                                          methods=[{"name": "bootstrap"}], reps=5, M=50, alpha=0.05,
                                          scenarios=[{"mu": 0.0}, {"mu": 0.5, "label": "c=0.5"}]))
    metrics = {r["metric"] for r in run_experiment(cfg).rows}
    assert "rejection_rate@alpha=0.05@mu=0.0" in metrics
    assert "rejection_rate@alpha=0.05@c=0.5" in metrics


def test_report_files(tmp_path):
    rep = run_experiment(ci_cfg(reps=4, M=50))
    csv_path, json_path = rep.write(tmp_path / "out" / "sim.csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "method,metric,value,mc_se,reps,warnings"
    assert len(lines) == 5
    side = json.loads(json_path.read_text())
    assert side["seed"] == 1 and "wall_time_seconds" in side


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ci_cfg(extra=1)
    with pytest.raises(ConfigError):
        ci_cfg(alpha=1.2)
    with pytest.raises(ConfigError):
        ci_cfg(methods=[{"name": "lot-nb"}])
    with pytest.raises(ConfigError):
        ci_cfg(methods=[{"name": "bootstrap"}, {"name": "bootstrap"}])
    with pytest.raises(ConfigError):
        MethodSpec("nope")
    with pytest.raises(ConfigError):
        run_test_experiment(ci_cfg())
    p = tmp_path / "c.yaml"
    p.write_text("model: normal\nmethods:\n  - name: bootstrap\nreps: 3\n")
    assert load_config(p).reps == 3
    p.write_text("- 1\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_method_labels():
    assert MethodSpec("loci-nb", delta=0.5).label == "loci-nb(delta=0.5)"
    assert MethodSpec("loci-nb", label="x").label == "x"
