"""Command line entry point: ``spdelab run | validate | schema``.

Exit codes: 0 success, 2 invalid config or IO failure, 3 when any cell
failed to converge (the run still completes and marks those cells).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .config import SCHEMA, ConfigError, load_config
from .experiments import ExperimentResult, run_experiment

OUT_ENV = "SPDELAB_OUT"
EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def render_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([format_value(row.get(c)) for c in result.columns])
    return buf.getvalue()


def render_json(result: ExperimentResult) -> str:
    def cell(v):
        s = format_value(v)
        if s == "":
            return None
        if isinstance(v, (bool, np.bool_)):
            return bool(v)
        if isinstance(v, (int, np.integer)):
            return int(v)
        if isinstance(v, (float, np.floating)):
            return s if math.isinf(v) else float(v)
        return s

    rows = [{c: cell(r.get(c)) for c in result.columns} for r in result.rows]
    return json.dumps({"experiment": result.experiment, "columns": result.columns, "rows": rows}, indent=1) + "\n"


def _out_dir(arg, cfg) -> Path:
    if arg:
        return Path(arg)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    path = Path(cfg.output["path"])
    return path if path.is_absolute() else cfg.base_dir / path


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    workers = max(1, args.threads)
    started = datetime.now(timezone.utc)
    tic = time.perf_counter()
    try:
        result = run_experiment(cfg, workers)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    wall = time.perf_counter() - tic
    out = _out_dir(args.out, cfg)
    files = {"results.csv": render_csv(result)}
    if cfg.output["format"] == "csv+json":
        files["results.json"] = render_json(result)
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.resolved(),
        "config_file": str(Path(args.config).resolve()),
        "seed": cfg.numerics["seed"],
        "workers": workers,
        "started": started.isoformat(),
        "wall_time_s": wall,
        "rows": len(result.rows),
        "nonconverged_cells": result.nonconverged,
        "files": sorted(files),
        "versions": {
            "spdelab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    files["manifest.json"] = json.dumps(manifest, indent=1) + "\n"
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, newline="")
    except OSError as exc:
        print(f"cannot write output to {out}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"{cfg.experiment}: {len(result.rows)} rows written to {out}")
    if result.nonconverged:
        print(f"{result.nonconverged} cell(s) did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {cfg.experiment}")
    return EXIT_OK


def cmd_schema(args) -> int:
    jsonschema.Draft202012Validator.check_schema(SCHEMA)
    print(json.dumps(SCHEMA, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdelab", description="Spectral experiments for SPDEs with gradient noise.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    run.add_argument("--threads", type=int, default=1, help="worker threads for independent cells")
    run.add_argument("--seed", type=int, help="override numerics.seed")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    sch = sub.add_parser("schema", help="print the config JSON schema")
    sch.set_defaults(func=cmd_schema)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors count as validation failures
        return EXIT_INVALID if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
