"""Command-line front end.

Subcommands: synth (build and cache the offline designs), run (full
experiment), bench (timing-only sweep, no files written), plot (re-emit
SVGs from previously written trace CSVs), validate (config and
admissibility checks).  Exit codes: 0 success, 1 failure with a
machine-readable JSON error on stderr, 2 usage errors (argparse).
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import harness, plots
from .harness import ExperimentConfig, HarnessError


def _fail(message: str) -> int:
    sys.stderr.write(json.dumps({"error": message}) + "\n")
    return 1


def _load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.from_file(path)


def _cmd_synth(args) -> int:
    cfg = _load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    os.makedirs(cfg.out_dir, exist_ok=True)
    cache_dir = os.path.join(cfg.out_dir, "design_cache")
    bundle = harness.build_designs(cfg, cache_dir=cache_dir)
    print(f"design key {harness.config_hash(cfg)} cached in {cache_dir}")
    for axis, design in sorted(bundle.axes.items()):
        print(f"axis {axis}:")
        for name in ("low", "mid", "high"):
            law = design.laws[name]
            gain = ", ".join(f"{v:.6f}" for v in law.gain.ravel())
            poly = design.sets[name]
            iters = design.set_iterations.get(name, 0)
            print(f"  {name:<4} gain [{gain}]  set rows {poly.nrows}"
                  f"  iterations {iters}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    report = harness.run_experiment(cfg)
    print(harness.render_report(report), end="")
    failed = [res.name for res in report.results
              if res.error and res.timing is None]
    if failed:
        return _fail("controller runs failed: " + ", ".join(failed))
    return 0


def _cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    report = harness.run_experiment(cfg, write_outputs=False)
    print(f"{'controller':<10} {'total_s':>9} {'mean_ms':>9} {'max_ms':>9} "
          f"{'first_ms':>9} {'steady_ms':>10} {'steps':>6}")
    for res in report.results:
        if res.timing is None:
            print(f"{res.name:<10} failed: {res.error}")
            continue
        t = res.timing
        print(f"{res.name:<10} {t.total_s:>9.3f} {t.mean_ms:>9.3f} "
              f"{t.max_ms:>9.3f} {res.first_ms:>9.3f} "
              f"{res.steady_mean_ms:>10.3f} {t.count:>6d}")
    return 0


def _cmd_plot(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.results, "trace_*.csv")))
    if not paths:
        return _fail(f"no trace CSVs found in {args.results}")
    traces = {}
    for path in paths:
        name = os.path.basename(path)[len("trace_"):-len(".csv")]
        traces[name] = harness.read_trace_csv(path)
    longest = max(traces.values(), key=lambda tr: tr["t"].shape[0])
    plots.plot_path(
        os.path.join(args.results, "path.svg"),
        {name: (tr["y"], tr["z"]) for name, tr in traces.items()},
        (longest["ref_y"], longest["ref_z"]))
    plots.plot_solve_times(
        os.path.join(args.results, "solve_times.svg"),
        {name: (tr["t"],
                (tr["solve_time_y"] + tr["solve_time_z"]) * 1e3)
         for name, tr in traces.items()})
    print(f"wrote path.svg and solve_times.svg to {args.results}")
    return 0


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    problems = harness.validate_config(cfg)
    if problems:
        for text in problems:
            print(f"violation: {text}")
        return _fail(f"{len(problems)} validation problem(s)")
    print("config ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ictrack",
        description="constrained trajectory-tracking benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="build and cache offline designs")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--out", default=None)
    p_synth.set_defaults(func=_cmd_synth)

    p_run = sub.add_parser("run", help="run the configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="timing-only sweep, no files")
    p_bench.add_argument("--config", required=True)
    p_bench.set_defaults(func=_cmd_bench)

    p_plot = sub.add_parser("plot", help="re-emit SVGs from trace CSVs")
    p_plot.add_argument("--results", required=True)
    p_plot.set_defaults(func=_cmd_plot)

    p_val = sub.add_parser("validate", help="check config and admissibility")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    np.set_printoptions(precision=6, suppress=True)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HarnessError as exc:
        return _fail(str(exc))
    except OSError as exc:
        return _fail(f"io failure: {exc}")


if __name__ == "__main__":
    sys.exit(main())
