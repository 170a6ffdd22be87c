"""
Command-line entry point::

    layerlab <oracle|solve|rates|stretch|scaling|optimize> --config FILE [--out DIR] [--threads N] [--echo-config]

Exit status: 0 verdict pass, 1 verdict fail, 2 config/schema error,
3 geometry guard violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import StudyKind, echo_config, guard_errors, parse_config
from .exceptions import ConfigError, GeometryError, LayerLabError
from .experiments import run_study
from .io import write_csv, write_json
from .solver import write_field_csv

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERIC = 0, 1, 2, 3, 4

COLUMNS = {
    StudyKind.ORACLE: ["eps", "f_eps", "f0", "delta", "f1", "err"],
    StudyKind.RATES: ["eps", "n_b", "f_eps", "f0", "delta", "f1", "g_eps", "err"],
    StudyKind.SOLVE: [
        "eps", "n_b", "m", "vertices", "f_eps", "f0", "delta", "f1", "g_eps",
        "tangential_layer_energy", "h1_bound_quantity", "energy_identity_gap",
    ],
    StudyKind.STRETCH: ["eps", "n_b", "norm", "negative_norm"],
    StudyKind.SCALING: ["eps", "tangential", "layer_energy"],
    StudyKind.OPTIMIZE: ["iteration", "objective"],
}


def _flat(record):
    out = dict(record.get("metadata", {}))
    out.update({k: v for k, v in record.items() if k != "metadata"})
    return out


def write_outputs(cfg, result, out_dir):
    """Study CSV, verdict JSON and per-study extras; every file is written atomically."""
    out_dir = Path(out_dir)
    kind = cfg.study
    written = []
    rows = [_flat(r) for r in result.records]
    path = out_dir / f"{kind.value}.csv"
    write_csv(path, kind.value, COLUMNS[kind], rows)
    written.append(path)
    if kind == StudyKind.SOLVE:
        for k, sol in enumerate(result.solutions):
            p = out_dir / f"solve_field_{k}.csv"
            write_field_csv(sol.u, p)
            written.append(p)
    if kind == StudyKind.OPTIMIZE:
        t = np.arange(256) / 256
        h = result.optimum.h
        k = cfg.curve().curvature(t)
        p = out_dir / "optimize_profile.csv"
        write_csv(p, "optimize_profile", ["t", "h", "curvature"],
                  [{"t": a, "h": b, "curvature": c} for a, b, c in zip(t, h(t), k)])
        written.append(p)
    p = out_dir / f"{kind.value}_verdict.json"
    write_json(p, result.verdict())
    written.append(p)
    return written


def build_parser():
    ap = argparse.ArgumentParser(prog="layerlab", description="Thin insulating layer studies.")
    ap.add_argument("study", choices=[k.value for k in StudyKind])
    ap.add_argument("--config", required=True, help="YAML study file")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, help="worker threads for per-eps solves")
    ap.add_argument("--echo-config", action="store_true", help="print the materialised config and exit")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"study": args.study}
    if args.out is not None:
        overrides["output"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    level = max(cfg.verbosity, args.verbose)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(level, 2)])

    guard = guard_errors(cfg)
    if guard:
        print(f"geometry guard: {guard}", file=sys.stderr)
        return EXIT_GUARD
    if args.echo_config:
        sys.stdout.write(echo_config(cfg))
        return EXIT_PASS

    try:
        result = run_study(cfg, threads=cfg.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"geometry guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except LayerLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    for p in write_outputs(cfg, result, cfg.output):
        logging.getLogger(__name__).info("wrote %s", p)
    verdict = "PASS" if result.passed else "FAIL"
    print(f"{cfg.study.value}: {verdict}")
    return EXIT_PASS if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
