"""Replication engine for coverage and rejection-rate studies.

Replications are the unit of parallel work. Each replication builds its own
model instance and draws every random number from substreams keyed by
(scenario, replication, role), so reports are identical for any thread count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import core
from .design import build_try_design, design_dim, make_unit_design
from .models import make_model
from .streams import Streams

log = logging.getLogger(__name__)

CI_METHODS = ("bootstrap", "m-out-of-n", "loci-nb", "loci-is")
TEST_METHODS = ("bootstrap", "lot-nb", "lot-is-design", "lot-is-refined")
THREADS_ENV = "LOTCI_THREADS"


class ConfigError(ValueError):
    pass


@dataclass
class MethodSpec:
    name: str
    label: str | None = None
    delta: float | None = None
    design: dict | None = None
    m: int | None = None
    budget: int | None = None

    def __post_init__(self):
        if self.name not in set(CI_METHODS) | set(TEST_METHODS):
            raise ConfigError(f"unknown method {self.name!r}")
        if self.label is None:
            self.label = self.name if self.delta is None else f"{self.name}(delta={self.delta})"


@dataclass
class ExperimentConfig:
    model: str
    model_config: dict = field(default_factory=dict)
    methods: list[MethodSpec] = field(default_factory=list)
    kind: str = "ci"
    reps: int = 100
    M: int = 1000
    alpha: float | list[float] = 0.05
    seed: int = 0
    threads: int = 1
    scenarios: list[dict] = field(default_factory=list)
    common_random_numbers: bool = True

    def __post_init__(self):
        self.methods = [m if isinstance(m, MethodSpec) else MethodSpec(**m) for m in self.methods]
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.kind not in ("ci", "test"):
            raise ConfigError("kind must be 'ci' or 'test'")
        allowed = CI_METHODS if self.kind == "ci" else TEST_METHODS
        for m in self.methods:
            if m.name not in allowed:
                raise ConfigError(f"method {m.name!r} is not valid for a {self.kind} experiment")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ConfigError("method labels must be unique")
        if int(self.reps) < 1 or int(self.M) < 1:
            raise ConfigError("reps and M must be >= 1")
        for a in self.alphas:
            if not 0.0 < a < 1.0:
                raise ConfigError("alpha must lie in (0, 1)")
        if self.kind == "ci" and len(self.alphas) != 1:
            raise ConfigError("interval experiments take a single alpha")
        self.reps, self.M, self.seed, self.threads = int(self.reps), int(self.M), int(self.seed), int(self.threads)

    @property
    def alphas(self) -> list[float]:
        return [float(a) for a in (self.alpha if isinstance(self.alpha, (list, tuple)) else [self.alpha])]

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["methods"] = [asdict(m) for m in self.methods]
        return out


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment file."""
    text = Path(path).read_text()
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return ExperimentConfig.from_dict(d)


@dataclass(frozen=True)
class SeedPlan:
    """Substream keys: (scenario, rep, 0) data, (scenario, rep, 1[, method]) resamples, (scenario, rep, 2[, method]) designs."""

    seed: int
    common_random_numbers: bool = True

    def data(self, scenario: int, rep: int) -> np.random.Generator:
        return Streams(self.seed, (scenario, rep, 0)).generator(0)

    def resamples(self, scenario: int, rep: int, method: int) -> Streams:
        key = (scenario, rep, 1) if self.common_random_numbers else (scenario, rep, 1, method)
        return Streams(self.seed, key)

    def design(self, scenario: int, rep: int, method: int) -> np.random.Generator:
        key = (scenario, rep, 2) if self.common_random_numbers else (scenario, rep, 2, method)
        return Streams(self.seed, key).generator(0)

    def assignments(self, reps: int, methods: int, scenarios: int = 1) -> list[tuple]:
        out = []
        for s in range(scenarios):
            for r in range(reps):
                out.append(("data", s, r, None, (s, r, 0, 0)))
                for m in range(methods):
                    k = self.resamples(s, r, m).key
                    out.append(("resamples", s, r, m, k + ("<try point>",)))
        return out


def seed_plan(seed: int, common_random_numbers: bool = True) -> SeedPlan:
    return SeedPlan(int(seed), common_random_numbers)


def _try_design(model, data, theta_hat, spec: MethodSpec, rng, null=False):
    region = model.neighborhood(data, theta_hat, spec.delta)
    if null:
        region = region.with_constraint(model.null_constraint)
    unit = make_unit_design(spec.design or model.default_design, design_dim(region), rng)
    return region, build_try_design(theta_hat, region, unit)


def run_ci_method(model, data, spec: MethodSpec, M: int, alpha: float, streams, design_rng) -> core.CiResult:
    """Interval for one dataset by the method described in ``spec``."""
    if spec.name == "bootstrap":
        return core.hybrid_bootstrap_ci(model, data, M, streams, alpha)
    if spec.name == "m-out-of-n":
        n = model.sample_size(data)
        m = spec.m if spec.m is not None else int(math.floor(2.0 * math.sqrt(n)))
        return core.m_out_of_n_ci(model, data, m, M, streams, alpha)
    theta_hat = model.estimate(data)
    region, td = _try_design(model, data, theta_hat, spec, design_rng)
    if spec.name == "loci-nb":
        return core.nb_ci(model, data, region, td, M, streams, alpha)
    if spec.name == "loci-is":
        return core.is_ci(model, data, region, td, M, streams, alpha)
    raise ConfigError(f"{spec.name!r} is not an interval method")


def run_test_method(model, data, spec: MethodSpec, M: int, streams, design_rng) -> core.PValueResult:
    """p-value for one dataset by the method described in ``spec``."""
    if spec.name == "bootstrap":
        return core.bootstrap_pvalue(model, data, M, streams)
    theta_hat = model.estimate(data)
    region, td = _try_design(model, data, theta_hat, spec, design_rng, null=True)
    if spec.name == "lot-nb":
        return core.nb_pvalue(model, data, region, td, M, streams)
    if spec.name == "lot-is-design":
        return core.is_pvalue_design(model, data, td, M, streams)
    if spec.name == "lot-is-refined":
        return core.is_pvalue_refined(model, data, region, td, M, streams, spec.budget)
    raise ConfigError(f"{spec.name!r} is not a testing method")


def _warning_kind(w: str) -> str:
    return w.split(":")[0].split(" point")[0].strip()


def _replicate(cfg: ExperimentConfig, plan: SeedPlan, scenario: int, model_config: dict, rep: int) -> list[dict]:
    model = make_model(cfg.model, model_config)
    data = model.generate(plan.data(scenario, rep))
    truth = model.true_target() if cfg.kind == "ci" else None
    out = []
    for mi, spec in enumerate(cfg.methods):
        streams = plan.resamples(scenario, rep, mi)
        try:
            if cfg.kind == "ci":
                res = run_ci_method(model, data, spec, cfg.M, cfg.alphas[0], streams, plan.design(scenario, rep, mi))
                out.append({
                    "covered": bool(res.lower <= truth <= res.upper),
                    "length": res.length,
                    "points": len(res.points),
                    "warnings": res.warnings,
                })
            else:
                res = run_test_method(model, data, spec, cfg.M, streams, plan.design(scenario, rep, mi))
                out.append({"p": res.p, "points": len(res.points), "warnings": res.warnings})
        except Exception as exc:  # replication recorded as skipped, never silently dropped
            log.warning("rep %d method %s skipped: %s", rep, spec.label, exc)
            out.append({"skipped": f"{type(exc).__name__}: {exc}"})
    return out


def _rate_se(r: float, n: int) -> float:
    return math.sqrt(max(r * (1.0 - r), 0.0) / n) if n > 0 else math.nan


@dataclass
class SimReport:
    rows: list[dict]
    config: dict
    seed: int
    wall_time: float = 0.0
    threads: int = 1
    details: dict = field(default_factory=dict)

    def value(self, method: str, metric: str) -> float:
        for r in self.rows:
            if r["method"] == method and r["metric"] == metric:
                return r["value"]
        raise KeyError((method, metric))

    def row(self, method: str, metric: str) -> dict:
        for r in self.rows:
            if r["method"] == method and r["metric"] == metric:
                return r
        raise KeyError((method, metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "metric", "value", "mc_se", "reps", "warnings"])
        for r in self.rows:
            se = "" if r["mc_se"] is None else repr(float(r["mc_se"]))
            w.writerow([r["method"], r["metric"], repr(float(r["value"])), se, r["reps"], r["warnings"]])
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "threads": self.threads,
            "wall_time_seconds": self.wall_time,
            "details": self.details,
            "rows": self.rows,
        }

    def write(self, out) -> tuple[Path, Path]:
        """Write ``<out>.csv`` and ``<out>.json``; ``out`` may carry either suffix."""
        out = Path(out)
        base = out.with_suffix("") if out.suffix in (".csv", ".json") else out
        base.parent.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = base.with_suffix(".csv"), base.with_suffix(".json")
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.sidecar(), indent=2, default=_json_default) + "\n")
        return csv_path, json_path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _fmt_warnings(counter: Counter) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(counter.items()))


def _aggregate_ci(cfg, results, suffix=""):
    rows, details = [], {}
    for mi, spec in enumerate(cfg.methods):
        recs = [r[mi] for r in results]
        ok = [r for r in recs if "skipped" not in r]
        skipped = [r["skipped"] for r in recs if "skipped" in r]
        warn = Counter(_warning_kind(w) for r in ok for w in r["warnings"])
        if skipped:
            warn["skipped"] = len(skipped)
        n = len(ok)
        cov = np.array([r["covered"] for r in ok], dtype=float)
        lens = np.array([r["length"] for r in ok], dtype=float)
        cr = float(cov.mean()) if n else math.nan
        ml = float(lens.mean()) if n else math.nan
        sdl = float(lens.std(ddof=1)) if n > 1 else 0.0
        ws = _fmt_warnings(warn)
        rows += [
            {"method": spec.label, "metric": "CR" + suffix, "value": cr, "mc_se": _rate_se(cr, n), "reps": n, "warnings": ws},
            {"method": spec.label, "metric": "ML" + suffix, "value": ml, "mc_se": sdl / math.sqrt(n) if n else math.nan,
             "reps": n, "warnings": ws},
            {"method": spec.label, "metric": "SDL" + suffix, "value": sdl,
             "mc_se": sdl / math.sqrt(2.0 * (n - 1)) if n > 1 else math.nan, "reps": n, "warnings": ws},
            {"method": spec.label, "metric": "try_points" + suffix,
             "value": float(np.mean([r["points"] for r in ok])) if n else math.nan, "mc_se": None, "reps": n,
             "warnings": ws},
        ]
        details[spec.label + suffix] = {"skipped": skipped[:20], "skipped_count": len(skipped),
                                        "covered": cov.astype(int).tolist(), "lengths": lens.tolist()}
    return rows, details


def _aggregate_test(cfg, results, suffix=""):
    rows, details = [], {}
    for mi, spec in enumerate(cfg.methods):
        recs = [r[mi] for r in results]
        ok = [r for r in recs if "skipped" not in r]
        skipped = [r["skipped"] for r in recs if "skipped" in r]
        warn = Counter(_warning_kind(w) for r in ok for w in r["warnings"])
        if skipped:
            warn["skipped"] = len(skipped)
        n = len(ok)
        p = np.array([r["p"] for r in ok], dtype=float)
        ws = _fmt_warnings(warn)
        for a in cfg.alphas:
            rate = float(np.mean(p < a)) if n else math.nan
            rows.append({"method": spec.label, "metric": f"rejection_rate@alpha={a:g}{suffix}", "value": rate,
                         "mc_se": _rate_se(rate, n), "reps": n, "warnings": ws})
        rows.append({"method": spec.label, "metric": "try_points" + suffix,
                     "value": float(np.mean([r["points"] for r in ok])) if n else math.nan, "mc_se": None,
                     "reps": n, "warnings": ws})
        details[spec.label + suffix] = {"skipped": skipped[:20], "skipped_count": len(skipped), "p_values": p.tolist()}
    return rows, details


def _scenario_suffix(sc: dict) -> str:
    label = sc.get("label") or ",".join(f"{k}={v}" for k, v in sorted(sc.items()) if k != "label")
    return f"@{label}"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else 1


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> SimReport:
    threads = cfg.threads if threads is None else int(threads)
    threads = max(1, threads)
    plan = seed_plan(cfg.seed, cfg.common_random_numbers)
    scenarios = cfg.scenarios or [{}]
    t0 = time.perf_counter()
    rows, details = [], {}
    for si, sc in enumerate(scenarios):
        mc = dict(cfg.model_config)
        mc.update({k: v for k, v in sc.items() if k != "label"})

        def one(rep, si=si, mc=mc):
            return _replicate(cfg, plan, si, mc, rep)

        if threads == 1:
            results = [one(r) for r in range(cfg.reps)]
        else:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(one, range(cfg.reps)))
        suffix = _scenario_suffix(sc) if cfg.scenarios else ""
        agg = _aggregate_ci if cfg.kind == "ci" else _aggregate_test
        r, d = agg(cfg, results, suffix)
        rows += r
        details.update(d)
    return SimReport(rows, cfg.to_dict(), cfg.seed, time.perf_counter() - t0, threads, details)


def run_ci_experiment(cfg: ExperimentConfig, threads: int | None = None) -> SimReport:
    if cfg.kind != "ci":
        raise ConfigError("not an interval experiment")
    return run_experiment(cfg, threads)


def run_test_experiment(cfg: ExperimentConfig, threads: int | None = None) -> SimReport:
    if cfg.kind != "test":
        raise ConfigError("not a testing experiment")
    return run_experiment(cfg, threads)
