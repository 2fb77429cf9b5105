"""Command-line entry point.

Exit codes: 0 success or all honest, 10 misbehavior detected, 2 usage or
parse error, 1 replay mismatch.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .broker import SimConfig, SimulationTrace, replay, run_cycles
from .errors import ConfigError, SLError
from .misbehavior import DetectParams, ReportedOpinion, detect
from .scenarios import (
    large_scale_synthetic,
    roc_sweep,
    run_intersection,
    single_run_trace,
    threshold_sweep,
)
from .trust import TrustStore, atomic_write

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_MISBEHAVIOR = 0, 1, 2, 10

DEFAULT_FAULTS = [(1.0, 0.75), (0.9, 0.75), (0.8, 0.75), (0.7, 0.75), (0.25, 0.5), (0.25, 0.25)]


class UsageError(Exception):
    pass


def theta_grid(args, lo=0.10, hi=0.30, step=0.01) -> np.ndarray:
    if args.theta is not None:
        return np.array([args.theta])
    lo = lo if args.theta_min is None else args.theta_min
    hi = hi if args.theta_max is None else args.theta_max
    step = step if args.theta_step is None else args.theta_step
    if step <= 0 or hi < lo:
        raise UsageError("theta range needs step > 0 and max >= min")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    grid = np.round(lo + step * np.arange(n), 10)
    if grid.min() < 0 or grid.max() > 1:
        raise UsageError("theta values must lie in [0, 1]")
    return grid


def _positive_runs(args):
    if args.runs is None or args.runs < 1:
        raise UsageError("--runs must be a positive integer")


class Outputs:
    def __init__(self, out_dir, command, args):
        self.dir = out_dir
        self.command = command
        self.args = args
        self.t0 = time.time()
        self.artifacts = []

    def write(self, name, text):
        atomic_write(os.path.join(self.dir, name), text)
        self.artifacts.append(name)

    def write_json(self, name, obj):
        obj = dict(obj, manifest="manifest.json")
        self.write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def finish(self):
        man = {"command": self.command, "config": getattr(self.args, "config", None),
               "seed": getattr(self.args, "seed", None), "output_directory": os.path.abspath(self.dir),
               "tool_version": __version__, "wall_clock_seconds": round(time.time() - self.t0, 3),
               "artifacts": self.artifacts}
        atomic_write(os.path.join(self.dir, "manifest.json"), json.dumps(man, indent=2) + "\n")


def _emit_table(out: Outputs, stem: str, res, fmt: str):
    if fmt == "json":
        out.write_json(stem + ".json", res.to_json())
    else:
        out.write(stem + ".csv", res.to_csv())


# ---------------------------------------------------------------- commands

def _load_reports(path):
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("reports")
    if not isinstance(data, list):
        raise ConfigError("reports file must hold a list of reports")
    out = []
    for i, r in enumerate(data):
        try:
            out.append(ReportedOpinion.from_json(r))
        except SLError as exc:
            raise ConfigError(f"reports[{i}]: {exc}") from None
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"reports[{i}]: missing field {exc}") from None
    return out


def cmd_detect(args) -> int:
    reports = _load_reports(args.reports)
    store = TrustStore.load_jsonl(args.trust) if args.trust else None
    theta = 0.15 if args.theta is None else args.theta
    res = detect(reports, store, theta, DetectParams(fusion=args.fusion, discount_by_trust=store is not None))
    json.dump(res.to_json(), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_MISBEHAVIOR if res.misbehaving else EXIT_OK


def cmd_simulate(args) -> int:
    out = Outputs(args.out, "simulate", args)
    if args.config:
        cfg = SimConfig.load(args.config)
        trace = run_cycles(cfg, args.cycles, cfg.seed if args.seed is None else args.seed)
        out.write("trace.jsonl", trace.to_jsonl())
        out.write("trust.jsonl", "".join(json.dumps(r) + "\n" for r in trace.trust.snapshot()))
        out.finish()
        flagged = any(e["payload"]["result"]["misbehaving"] for e in trace.of_type("verdict"))
        return EXIT_MISBEHAVIOR if flagged or trace.of_type("sybil_flag") else EXIT_OK
    if args.scenario is None:
        raise UsageError("simulate needs --config or --scenario")
    _positive_runs(args)
    theta = 0.15 if args.theta is None else args.theta
    seed = args.seed or 0
    res = run_intersection(args.scenario, theta, args.runs, seed)
    _emit_table(out, f"intersection_s{args.scenario}", res, args.format)
    if res.extra:
        out.write_json("recalibration.json", res.extra)
    if args.trace_run is not None:
        out.write_json("run_trace.json", single_run_trace(args.scenario, theta, seed, args.trace_run))
    out.finish()
    return EXIT_OK


def cmd_sweep(args) -> int:
    _positive_runs(args)
    res = threshold_sweep(theta_grid(args), args.runs, args.seed or 0)
    out = Outputs(args.out, "sweep", args)
    _emit_table(out, "sweep", res, args.format)
    out.finish()
    return EXIT_OK


def cmd_roc(args) -> int:
    _positive_runs(args)
    faults = DEFAULT_FAULTS
    if args.config:
        with open(args.config) as fh:
            faults = [tuple(map(float, f)) for f in json.load(fh)["faults"]]
    res = roc_sweep(faults, theta_grid(args, 0.0, 0.6, 0.01), args.runs, args.seed or 0)
    out = Outputs(args.out, "roc", args)
    _emit_table(out, "roc", res, args.format)
    out.finish()
    return EXIT_OK


def cmd_scale(args) -> int:
    errors = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    if args.config:
        with open(args.config) as fh:
            errors = [float(e) for e in json.load(fh)["error_rates"]]
    reports = 10_000 if args.runs is None else args.runs
    if reports < 1:
        raise UsageError("--runs must be a positive integer")
    res = large_scale_synthetic(errors, theta_grid(args, 0.04, 0.10, 0.02), reports, args.seed or 0)
    out = Outputs(args.out, "scale", args)
    _emit_table(out, "scale", res, args.format)
    out.finish()
    return EXIT_OK


def cmd_replay(args) -> int:
    events = SimulationTrace.load_events(args.trace)
    bad = replay(events)
    n = sum(e["event_type"] == "verdict" for e in events)
    json.dump({"verdicts": n, "mismatches": bad}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_MISMATCH if bad else EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sltrust", description="Subjective-logic trust and misbehavior detection")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, runs=None):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--runs", type=int, default=runs)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--theta-min", type=float)
        sp.add_argument("--theta-max", type=float)
        sp.add_argument("--theta-step", type=float)
        sp.add_argument("--out", metavar="DIR", default=".")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    d = sub.add_parser("detect", help="classify a set of reported opinions")
    d.add_argument("--reports", required=True, metavar="PATH")
    d.add_argument("--trust", metavar="PATH")
    d.add_argument("--theta", type=float)
    d.add_argument("--fusion", choices=("mean", "chain"), default="mean")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", help="broker simulation (--config) or intersection scenario (--scenario)")
    common(s, runs=1000)
    s.add_argument("--scenario", type=int, choices=(1, 2, 3))
    s.add_argument("--cycles", type=int)
    s.add_argument("--trace-run", type=int, metavar="K")
    s.set_defaults(func=cmd_simulate)

    for name, fn, runs, text in (("sweep", cmd_sweep, 1000, "threshold sweep"),
                                 ("roc", cmd_roc, 1000, "ROC sweep of RSU faults"),
                                 ("scale", cmd_scale, None, "large-scale synthetic grid")):
        sp = sub.add_parser(name, help=text)
        common(sp, runs)
        sp.set_defaults(func=fn)

    r = sub.add_parser("replay", help="re-run the verdicts recorded in a trace")
    r.add_argument("--trace", required=True, metavar="PATH")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SLError, OSError, json.JSONDecodeError) as exc:
        print(f"sltrust {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
