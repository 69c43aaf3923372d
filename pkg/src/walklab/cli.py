"""Batch experiment runner: ``walklab <task> --config file.json [--seed N] [--out DIR]``.

Tasks
-----
walk      exact return-probability series -> CSV (cached, content-addressed)
mc        collision or range estimates -> CSV
spectral  quotient-operator checks (sandwich, trace, comparison) -> JSON
fit       decay-exponent fit of a series CSV -> JSON
verify    named acceptance suite (or ``all``); exit code 1 on failure

Outputs are deterministic functions of the config (plus seed), and reports
embed the config hash.  Exit codes: 0 pass, 1 check failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .asymptotics import fit_decay
from .convolution import ReturnSeries, return_series
from .errors import UsageError, WalklabError
from .groups import FiniteQuotient, Group, parse_group_spec
from .measures import parse_measure_spec
from .montecarlo import RngStream, collision_return_estimate, range_functional
from .spectral import comparison_check, quotient_operator, sandwich_check, spectral_profile
from .verify import SUITES, run_all, run_suite


@dataclasses.dataclass
class ExperimentConfig:
    task: str
    group: str = ""
    measure: str = ""
    params: dict = dataclasses.field(default_factory=dict)
    seed: int | None = None
    out: str = "out"

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config fields {sorted(unknown)} in {path}")
        if "task" not in raw:
            raise UsageError(f"config {path} is missing the 'task' field")
        return ExperimentConfig(**raw)

    def hash(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _atomic_write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cache_key(parts: dict) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute one config; returns the report dict written to the out dir."""
    task = config.task
    out_dir = config.out
    os.makedirs(out_dir, exist_ok=True)
    if task == "walk":
        report = _task_walk(config)
    elif task == "mc":
        report = _task_mc(config)
    elif task == "spectral":
        report = _task_spectral(config)
    elif task == "fit":
        report = _task_fit(config)
    elif task == "verify":
        report = _task_verify(config)
    else:
        raise UsageError(f"unknown task {task!r}")
    report["config_sha"] = config.hash()
    report["version"] = __version__
    _write_json(os.path.join(out_dir, f"report-{task}.json"), report)
    return report


def _task_walk(config: ExperimentConfig) -> dict:
    p = config.params
    group = parse_group_spec(config.group)
    if isinstance(group, FiniteQuotient):
        raise UsageError("walk task needs an infinite group, not a quotient")
    n_max = int(p.get("n_max", 64))
    eps = p.get("eps")
    eps = None if eps is None else float(eps)
    key = _cache_key({"group": config.group, "measure": config.measure,
                      "eps": eps, "n": n_max,
                      "max_len": int(p.get("max_len", 1 << 23))})
    cache_path = os.path.join(config.out, "cache", f"{key}.csv")
    if os.path.exists(cache_path):
        series = ReturnSeries.from_csv(cache_path)
        cached = True
    else:
        measure = parse_measure_spec(config.measure, group)
        series = return_series(measure, n_max, eps=eps,
                               max_len=int(p.get("max_len", 1 << 23)),
                               measure_spec=config.measure)
        os.makedirs(os.path.dirname(cache_path), exist_ok=True)
        series.to_csv(cache_path)
        cached = False
    out_csv = os.path.join(config.out, "series.csv")
    series.to_csv(out_csv)
    report = {"task": "walk", "cached": cached, "csv": out_csv,
              "records": len(series.records)}
    if "fit" in p:
        fit = fit_decay(series, p["fit"]["model"], tuple(p["fit"]["range"]))
        report["fit"] = {"model": fit.model, "exponent": fit.exponent,
                         "half_width": fit.half_width, "r2": fit.r_squared}
    return report


def _task_mc(config: ExperimentConfig) -> dict:
    p = config.params
    if config.seed is None:
        raise UsageError("mc tasks need a seed")
    group = parse_group_spec(config.group)
    measure = parse_measure_spec(config.measure, group)
    mode = p.get("mode", "collision")
    n_values = [int(n) for n in p.get("n_values", [8, 16, 32])]
    n_samples = int(p.get("n_samples", 10_000))
    rows = []
    if mode == "collision":
        for i, n in enumerate(n_values):
            est = collision_return_estimate(measure, n, n_samples,
                                            RngStream(config.seed, i))
            rows.append((2 * n, est.estimate, est.stderr, n_samples, config.seed))
        header = "n,estimate,stderr,N,seed\n"
    elif mode == "range":
        s_grid = tuple(float(s) for s in p.get("s_grid", (0.5, 1.0)))
        for i, n in enumerate(n_values):
            samp = range_functional(measure, n, n_samples, s_grid,
                                    RngStream(config.seed, i))
            rows.append((n, samp.mean, samp.variance, n_samples, config.seed)
                        + tuple(x for pair in samp.laplace for x in pair))
        lap_cols = ",".join(f"laplace_s{s}!r,stderr_s{s}!r".replace("!r", "")
                            for s in s_grid)
        header = f"n,mean,variance,N,seed,{lap_cols}\n"
    else:
        raise UsageError(f"unknown mc mode {mode!r}")
    out_csv = os.path.join(config.out, f"mc-{mode}.csv")
    body = "".join(",".join(repr(x) if isinstance(x, float) else str(x)
                            for x in row) + "\n" for row in rows)
    _atomic_write(out_csv, header + body)
    return {"task": "mc", "mode": mode, "csv": out_csv, "rows": len(rows)}


def _task_spectral(config: ExperimentConfig) -> dict:
    p = config.params
    quotient = parse_group_spec(p.get("quotient", config.group))
    if not isinstance(quotient, FiniteQuotient):
        raise UsageError("spectral task needs a quotient: group spec")
    measure = parse_measure_spec(config.measure, quotient.parent)
    op = quotient_operator(measure, quotient)
    checks = p.get("checks", ["sandwich"])
    n_max = int(p.get("n_max", 100))
    results = {}
    for check in checks:
        if check == "sandwich":
            rep = sandwich_check(spectral_profile(op), n_max)
            results[check] = {"check": check, "n_range": [1, n_max],
                              "min_slack": min(rep.min_slack_lower,
                                               rep.min_slack_upper),
                              "violations": rep.violations}
        elif check == "trace":
            prof = spectral_profile(op, check=True)
            results[check] = {"check": check, "n_range": [1, 8], "violations": 0,
                              "min_slack": 0.0}
        elif check == "comparison":
            from .spectral import QuotientOperator

            op2 = QuotientOperator(quotient, op.matrix @ op.matrix)
            rep = comparison_check(op, op2, 2.0, n_max=n_max)
            results[check] = {"check": check, "certified": rep.certified,
                              "violations": rep.grid_violations,
                              "c1": rep.c1, "c2": rep.c2}
        else:
            raise UsageError(f"unknown spectral check {check!r}")
    return {"task": "spectral", "checks": results, "size": quotient.size}


def _task_fit(config: ExperimentConfig) -> dict:
    p = config.params
    series = ReturnSeries.from_csv(p["series_csv"])
    fit = fit_decay(series, p.get("model", "power"),
                    tuple(p.get("range", (series.records[0].n,
                                          series.records[-1].n))),
                    min_points=int(p.get("min_points", 5)))
    return {"task": "fit", "model": fit.model, "exponent": fit.exponent,
            "half_width": fit.half_width, "r2": fit.r_squared,
            "points": fit.points}


def _task_verify(config: ExperimentConfig) -> dict:
    name = config.params.get("suite", "all")
    seed = config.seed if config.seed is not None else 20260810
    results = run_all(seed=seed) if name == "all" else [run_suite(name, seed=seed)]
    for res in results:
        print(res.line())
    payload = {"task": "verify",
               "suites": {r.name: {"passed": r.passed, "measured": r.measured}
                          for r in results},
               "passed": all(r.passed for r in results)}
    return payload


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="walklab",
        description="return-probability experiments on finitely generated groups")
    parser.add_argument("task", choices=["walk", "mc", "spectral", "fit", "verify"])
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--suite", default=None,
                        help="verify: suite name or 'all' "
                             f"(available: {', '.join(sorted(SUITES))})")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.config:
            config = ExperimentConfig.from_file(args.config)
            if config.task != args.task:
                raise UsageError(
                    f"config task {config.task!r} does not match CLI task {args.task!r}")
        else:
            if args.task != "verify":
                raise UsageError("tasks other than verify need --config")
            config = ExperimentConfig(task="verify")
        if args.seed is not None:
            config.seed = args.seed
        if args.out is not None:
            config.out = args.out
        if args.suite is not None:
            config.params = dict(config.params)
            config.params["suite"] = args.suite
        report = run_experiment(config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except WalklabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if config.task == "verify" and not report.get("passed", True):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
