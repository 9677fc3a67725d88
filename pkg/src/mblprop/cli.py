"""Command-line driver.

    mblprop run CONFIG [--out DIR] [--threads N] [--seed-override SEED]
    mblprop sweep CONFIG --axis {seed,l,separation,N} --values 0,1,2 [...]

Exit codes: 0 when every verdict passes, 1 on configuration or runtime
errors, 2 when a bound is violated or a verdict fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

from .config import SCHEMA_VERSION, ExperimentConfig, load_config
from .errors import BoundViolation, ConfigError, MBLPropError
from .runner import run_experiment

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
AXES = {"seed": "experiment.seed", "l": "regions.l", "separation": "regions.separation", "N": "lattice.num_sites"}


def _atomic_write(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def _dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _error_doc(cfg: ExperimentConfig | None, status: str, exc: Exception) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "passed": False, "status": status, "error": str(exc),
           "error_type": type(exc).__name__}
    if isinstance(exc, BoundViolation):
        doc["failed_check"] = exc.check
        if exc.report is not None:
            doc["result"] = exc.report.to_dict()
    if cfg is not None:
        doc["config"] = cfg.to_dict()
        doc["kind"] = cfg.kind
    return doc


def execute(cfg: ExperimentConfig, out_dir: str, workers: int, write_csv: bool = True):
    """Run one configuration and write ``report.json`` (and ``curve.csv``).

    Returns ``(exit_code, summary_row)``.
    """
    try:
        outcome = run_experiment(cfg, workers)
    except BoundViolation as exc:
        _atomic_write(os.path.join(out_dir, "report.json"), _dumps(_error_doc(cfg, "bound_violation", exc)))
        print(f"bound violation: {exc.check}", file=sys.stderr)
        return EXIT_VIOLATION, None
    except (MBLPropError, ValueError, ArithmeticError, MemoryError) as exc:
        _atomic_write(os.path.join(out_dir, "report.json"), _dumps(_error_doc(cfg, "error", exc)))
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR, None
    doc = outcome.document(cfg)
    doc["status"] = "pass" if outcome.passed else "fail"
    _atomic_write(os.path.join(out_dir, "report.json"), _dumps(doc))
    if write_csv and outcome.curve_header:
        _atomic_write(os.path.join(out_dir, "curve.csv"), _csv_text(outcome.curve_header, outcome.curve_rows))
    if not outcome.passed:
        failing = [c["name"] for c in doc["result"].get("checks", []) if c.get("alarm") and not c.get("holds")]
        what = failing[0] if failing else f"verdict: metric {outcome.metric:.6g} vs bound {outcome.bound:.6g}"
        print(f"fail: {what}", file=sys.stderr)
    row = [outcome.metric, outcome.stderr, outcome.bound, outcome.margin]
    return (EXIT_OK if outcome.passed else EXIT_VIOLATION), row


def _load(path: str, seed_override):
    cfg = load_config(path)
    if seed_override is not None:
        cfg = cfg.with_overrides(**{"experiment.seed": seed_override})
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args.seed_override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.out or cfg.section("output")["dir"]
    code, _ = execute(cfg, out, args.threads, cfg.section("output")["csv"])
    return code


def _parse_values(axis: str, text: str) -> list:
    vals = []
    for tok in text.replace(" ", "").split(","):
        if not tok:
            continue
        if axis == "l" and tok == "auto":
            vals.append(tok)
            continue
        try:
            vals.append(int(tok))
        except ValueError as exc:
            raise ConfigError(f"sweep value {tok!r} is not an integer") from exc
    if not vals:
        raise ConfigError("no sweep values given")
    return vals


def _sweep_point(payload):
    cfg, axis, value, out_dir = payload
    point_dir = os.path.join(out_dir, "points", f"{axis}={value}")
    try:
        point = cfg.with_overrides(**{AXES[axis]: value})
    except ConfigError as exc:
        print(f"config error at {axis}={value}: {exc}", file=sys.stderr)
        return value, EXIT_ERROR, None
    code, row = execute(point, point_dir, 1, point.section("output")["csv"])
    return value, code, row


def cmd_sweep(args) -> int:
    try:
        cfg = _load(args.config, args.seed_override)
        values = _parse_values(args.axis, args.values)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.out or cfg.section("output")["dir"]
    payloads = [(cfg, args.axis, v, out) for v in values]
    if args.threads > 1 and len(values) > 1:
        with ProcessPoolExecutor(max_workers=min(args.threads, len(values))) as ex:
            results = list(ex.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]
    rows, points = [], []
    for value, code, row in results:
        points.append({"value": value, "exit_code": code, "report": os.path.join("points", f"{args.axis}={value}", "report.json")})
        if row is not None:
            rows.append([value] + row)
    header = [args.axis, "metric_mean", "stderr", "bound", "margin"]
    _atomic_write(os.path.join(out, "curve.csv"), _csv_text(header, rows))
    codes = [c for _, c, _ in results]
    code = EXIT_ERROR if EXIT_ERROR in codes else (EXIT_VIOLATION if EXIT_VIOLATION in codes else EXIT_OK)
    summary = {"schema_version": SCHEMA_VERSION, "kind": cfg.kind, "axis": args.axis, "points": points,
               "passed": code == EXIT_OK, "exit_code": code, "config": cfg.to_dict()}
    _atomic_write(os.path.join(out, "report.json"), _dumps(summary))
    return code


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mblprop", description="Information-propagation experiments on MBL spin chains.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: output.dir from the config)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker count")
    common.add_argument("--seed-override", type=_seed, default=None, help="replace experiment.seed")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one experiment")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", parents=[common], help="run an experiment over a parameter axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=sorted(AXES))
    s.add_argument("--values", required=True, help="comma-separated list")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
