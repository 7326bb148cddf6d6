"""Command-line entry point.

Exit codes: 0 ok, 2 input error, 3 infeasible region or design, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .core import InferenceError
from .dataio import DataError, load_data
from .design import (
    DesignError,
    InfeasibleError,
    build_try_design,
    design_dim,
    design_to_csv,
    make_unit_design,
)
from .harness import (
    CI_METHODS,
    TEST_METHODS,
    THREADS_ENV,
    ConfigError,
    ExperimentConfig,
    MethodSpec,
    default_threads,
    run_ci_method,
    run_experiment,
    run_test_method,
)
from .models import REGISTRY
from .numopt import OptimizationError
from .streams import Streams

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def _read_mapping(path) -> dict:
    if path is None:
        return {}
    try:
        d = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise UsageError(f"config {path} does not hold a mapping")
    return d


def _parse_design(text):
    if text is None:
        return None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--design is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise UsageError("--design must be a JSON object")
    return d


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _emit(record: dict, out):
    text = json.dumps(record, indent=2, default=_json_default) + "\n"
    if out is None:
        return
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _single_setup(args, methods):
    cfg = _read_mapping(args.config)
    model_config = dict(cfg.get("model_config", {}))
    if args.method not in methods:
        raise UsageError(f"--method must be one of {list(methods)}")
    design = _parse_design(args.design) or cfg.get("design")
    if args.center_only:
        design = {"kind": "center"}
    delta = args.delta if args.delta is not None else cfg.get("delta")
    model, data = load_data(args.model, args.data, model_config)
    spec = MethodSpec(args.method, delta=delta, design=design, m=args.m)
    streams = Streams(int(args.seed), (0, 0, 1))
    design_rng = Streams(int(args.seed), (0, 0, 2)).generator(0)
    return model, data, spec, streams, design_rng


def cmd_test(args) -> int:
    model, data, spec, streams, design_rng = _single_setup(args, TEST_METHODS)
    if model.null_constraint is None and spec.name != "bootstrap":
        raise UsageError(f"model {args.model!r} has no null hypothesis for local testing")
    if spec.name == "lot-nb" and spec.design == {"kind": "center"}:
        spec = MethodSpec("bootstrap")
    res = run_test_method(model, data, spec, int(args.M), streams, design_rng)
    print(repr(float(res.p)))
    rec = {"command": "test", "model": args.model, "method": spec.name, "seed": args.seed, "M": args.M,
           "result": res.to_dict()}
    _emit(rec, args.out)
    return EXIT_OK


def cmd_ci(args) -> int:
    if not 0.0 < args.alpha < 1.0:
        raise UsageError("--alpha must lie in (0, 1)")
    model, data, spec, streams, design_rng = _single_setup(args, CI_METHODS)
    res = run_ci_method(model, data, spec, int(args.M), float(args.alpha), streams, design_rng)
    print(f"{res.lower!r} {res.upper!r}")
    rec = {"command": "ci", "model": args.model, "method": spec.name, "seed": args.seed, "M": args.M,
           "alpha": args.alpha, "result": res.to_dict()}
    _emit(rec, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.config is None:
        raise UsageError("simulate requires --config")
    d = _read_mapping(args.config)
    for key in ("seed", "reps", "M", "alpha"):
        v = getattr(args, key)
        if v is not None:
            d[key] = v
    if args.method:
        keep = set(args.method)
        d["methods"] = [m for m in d.get("methods", []) if m.get("name") in keep or m.get("label") in keep]
    if args.delta is not None:
        for m in d.get("methods", []):
            m["delta"] = args.delta
            m.pop("label", None)
    cfg = ExperimentConfig.from_dict(d)
    threads = args.threads if args.threads is not None else default_threads()
    report = run_experiment(cfg, threads)
    out = args.out or Path(args.config).with_suffix("").name + "_report"
    csv_path, json_path = report.write(out)
    sys.stdout.write(report.to_csv())
    logging.getLogger(__name__).info("wrote %s and %s", csv_path, json_path)
    return EXIT_OK


def cmd_designs(args) -> int:
    spec = _parse_design(args.design) or {"kind": args.kind, "U": args.U, "L": args.L}
    seed_rng = Streams(int(args.seed), (0, 0, 2)).generator(0)
    if args.model:
        if not args.data:
            raise UsageError("--model needs --data to centre the try points")
        model, data = load_data(args.model, args.data, _read_mapping(args.config).get("model_config", {}))
        theta_hat = model.estimate(data)
        region = model.neighborhood(data, theta_hat, args.delta)
        if args.null:
            region = region.with_constraint(model.null_constraint)
        unit = make_unit_design(spec, design_dim(region), seed_rng)
        td = build_try_design(theta_hat, region, unit)
        text = td.to_csv()
    else:
        if args.q is None:
            raise UsageError("--q is required without --model")
        unit = make_unit_design(spec, int(args.q), seed_rng)
        text = design_to_csv(unit.points)
    if args.out and args.out != "-":
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lotci", description="Local optimization-based tests and confidence intervals.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def single(name, methods, default_method, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--model", required=True, choices=sorted(REGISTRY))
        s.add_argument("--data", required=True, help="CSV file in the model's schema")
        s.add_argument("--config", help="YAML/JSON with model_config, delta and design")
        s.add_argument("--method", default=default_method, help=f"one of {', '.join(methods)}")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--M", type=int, default=1000)
        s.add_argument("--delta", type=float)
        s.add_argument("--design", help='JSON design spec, e.g. {"kind": "lhd", "L": 30}')
        s.add_argument("--center-only", action="store_true", help="use the estimate as the only try point")
        s.add_argument("--m", type=int, help="resample size for m-out-of-n")
        s.add_argument("--out", help="write the JSON record here ('-' for stdout)")
        return s

    single("test", TEST_METHODS, "lot-nb", "p-value for one dataset")
    ci = single("ci", CI_METHODS, "loci-nb", "confidence interval for one dataset")
    ci.add_argument("--alpha", type=float, default=0.05)

    s = sub.add_parser("simulate", help="run a coverage or rejection-rate study")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--M", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--method", action="append", help="restrict to these methods (repeatable)")
    s.add_argument("--out", help="output prefix for <out>.csv and <out>.json")
    s.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")

    d = sub.add_parser("designs", help="emit a unit design or a model's try points as CSV")
    d.add_argument("--kind", default="grid", choices=["grid", "lhd", "center", "none"])
    d.add_argument("--U", type=int, default=3)
    d.add_argument("--L", type=int, default=30)
    d.add_argument("--q", type=int)
    d.add_argument("--design", help="JSON design spec (overrides --kind/--U/--L)")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--model", choices=sorted(REGISTRY))
    d.add_argument("--data")
    d.add_argument("--config")
    d.add_argument("--delta", type=float)
    d.add_argument("--null", action="store_true", help="intersect the neighborhood with the null region")
    d.add_argument("--out")
    return p


COMMANDS = {"test": cmd_test, "ci": cmd_ci, "simulate": cmd_simulate, "designs": cmd_designs}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OptimizationError, FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DataError, ConfigError, DesignError, InferenceError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser"]
