"""Command line harness: ``localinv run | list-problems | version``.

A run reads a JSON config, executes one task (or the full suite), and writes
``report.json`` plus ``tables/*.csv`` into the output directory.  Exit codes:
0 when every check passes, 1 when any check fails, 2 on a configuration
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _rng
from .cert import Budgets
from .suite import FULL_SUITE, TASKS, get_problem, problem_names, register_builtin, run_problem
from .tolerances import Tolerances

SCHEMA_VERSION = "1.0"
RUN_TASKS = ("certify", "scales", "invert", "sheets", "hadamard_levy", "implicit", "ode",
             "full_suite") + tuple(t for t in TASKS if t not in
                                   ("certify", "scales", "invert", "sheets", "hadamard_levy",
                                    "implicit", "ode"))

log = logging.getLogger("localinv")

NOTES = {
    "lipschitz_combination": "paired auxiliary maps combine Lipschitz constants by the maximum; "
                             "the minimum is not a valid bound under the product norm",
    "hadamard_levy_quantity": "the integrand defaults to the operator norm of the derivative; the "
                              "smallest singular value is available and is the quantity that "
                              "controls invertibility",
    "ode_sign_convention": "ode checks use u' = -(D_x g)^-1 D_t g; the opposite sign is reported "
                           "as defect_opposite_sign",
    "sheet_counts": "preimage counts are lower bounds from multistart search",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str
    seed: int
    problem: Optional[str] = None
    params: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    budgets: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    out: str = "localinv-out"

    FIELDS = ("task", "seed", "problem", "params", "options", "budgets", "tolerances", "out")

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(d) - set(cls.FIELDS))
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        if "task" not in d:
            raise ConfigError("config needs a task")
        if "seed" not in d or d["seed"] is None:
            raise ConfigError("config needs a seed")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        if self.task not in RUN_TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(RUN_TASKS)}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or \
                not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        if self.task != "full_suite":
            if not self.problem:
                raise ConfigError(f"task {self.task!r} needs a problem")
            if self.problem not in problem_names():
                raise ConfigError(f"unknown problem {self.problem!r}")
            try:
                get_problem(self.problem, **self.params)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad problem parameters: {exc}") from None
        for name in ("params", "options", "budgets", "tolerances"):
            if not isinstance(getattr(self, name), dict):
                raise ConfigError(f"{name} must be an object")
        self.tolerance_set()
        self.budget_set()

    def tolerance_set(self) -> Tolerances:
        try:
            return Tolerances(**self.tolerances)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad tolerances: {exc}") from None

    def budget_set(self) -> Budgets:
        try:
            b = Budgets(**self.budgets)
        except TypeError as exc:
            raise ConfigError(f"bad budgets: {exc}") from None
        for k, v in b.as_dict().items():
            vals = v if isinstance(v, list) else [v]
            if not all(isinstance(x, int) and x > 0 for x in vals):
                raise ConfigError(f"budget {k} must be positive integers")
        return b

    def as_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS}


def _threads():
    raw = os.environ.get("LOCALINV_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x != x:
            return "nan"
        if x in (float("inf"), float("-inf")):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _jobs(cfg: RunConfig):
    if cfg.task == "full_suite":
        return [(name, {}, task, dict(opts)) for name, task, opts in FULL_SUITE]
    return [(cfg.problem, cfg.params, cfg.task, dict(cfg.options))]


def _run_job(job, seed, tol, budgets):
    name, params, task, opts = job
    opts.setdefault("budgets", budgets)
    rec = get_problem(name, **params)
    sub = _rng.child_seed(seed, name, task)
    checks = run_problem(rec, task, opts, sub, tol)
    for c in checks:
        c["problem"] = name
        c["task"] = task
        c["seed"] = sub
    return checks


def execute(cfg: RunConfig, threads=None):
    """Run every job of ``cfg``; returns the report dictionary (not yet written)."""
    tol = cfg.tolerance_set()
    budgets = cfg.budget_set()
    register_builtin()
    jobs = _jobs(cfg)
    n = min(threads or _threads(), len(jobs))
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(lambda j: _run_job(j, cfg.seed, tol, budgets), jobs))
    else:
        results = [_run_job(j, cfg.seed, tol, budgets) for j in jobs]
    checks = sorted((c for r in results for c in r), key=lambda c: c["name"])
    failed = [c["name"] for c in checks if not c["passed"]]
    report = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        # the output directory is where the payload goes, not part of it
        "config": {k: v for k, v in cfg.as_dict().items() if k != "out"},
        "seed": cfg.seed,
        "tolerances": tol.as_dict(),
        "budgets": budgets.as_dict(),
        "checks": checks,
        "notes": NOTES,
        "summary": {"checks": len(checks), "passed": len(checks) - len(failed),
                    "failed": len(failed), "failed_checks": failed},
    }
    return _jsonable(report)


def _table_name(check_name):
    name = check_name.replace("][", "_").replace("[", "_").replace("]", "")
    return re.sub(r"[^A-Za-z0-9_.=+-]+", "_", name).strip("_")


def write_report(report, out_dir):
    """Write ``report.json`` and one CSV per tabular check; returns the report path."""
    out = Path(out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    body = dict(report)
    checks = []
    for c in body["checks"]:
        c = dict(c)
        table = c.pop("table", None)
        if table is not None:
            fname = _table_name(c["name"]) + ".csv"
            with open(out / "tables" / fname, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(table["header"])
                w.writerows(table["rows"])
            c["table_file"] = f"tables/{fname}"
        checks.append(c)
    body["checks"] = checks
    path = out / "report.json"
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_config(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("seed", "task", "problem", "out"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    return RunConfig.from_dict(data)


def cmd_run(args):
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = execute(cfg)
        path = write_report(report, cfg.out)
    except Exception as exc:  # never leak a traceback as the exit path
        log.exception("run failed")
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    s = report["summary"]
    print(f"{s['passed']}/{s['checks']} checks passed; report at {path}")
    for name in s["failed_checks"]:
        print(f"FAILED {name}")
    return 0 if s["failed"] == 0 else 1


def cmd_list(args):
    for rec in register_builtin():
        print(f"{rec.name:20s} {','.join(sorted(rec.tags)):45s} {rec.description}")
    return 0


def cmd_version(args):
    print(f"localinv {__version__} (report schema {SCHEMA_VERSION})")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="localinv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configured task")
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--seed", type=int)
    r.add_argument("--task", choices=RUN_TASKS)
    r.add_argument("--problem")
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)
    sub.add_parser("list-problems", help="list built-in problems").set_defaults(func=cmd_list)
    sub.add_parser("version", help="print the version").set_defaults(func=cmd_version)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
