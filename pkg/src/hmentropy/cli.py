"""Command line front end: flow, entropy, soliton-shoot, stability, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .entropy import EntropyConfig, entropy
from .errors import ConfigError, HMError, NoSolutionInBracket
from .experiments import EXPERIMENTS, load_config, run_experiment
from .flow import FlowState, StopRule, run_until
from .maps import dumps_map, loads_map, profile_to_grid
from .solitons import ShootingProblem, shoot_equivariant_soliton
from .stability import stability_report

log = logging.getLogger("hmentropy")


def _write(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _grid_shape(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected RHOxLOGT, e.g. 21x21") from exc


def cmd_flow(args) -> int:
    fmap = loads_map(Path(args.input).read_text())
    state = FlowState(fmap, time=args.t_start, dt=args.dt)
    final, trace = run_until(state, StopRule(args.max_time, args.energy_below, args.gradient_below), cadence=args.cadence)
    _write(args.trace, trace.to_csv())
    if args.output:
        _write(args.output, json.dumps(final.to_dict()) + "\n")
    log.info("t = %.6g after %d steps, energy %.6g", final.time, final.step_count, trace.column("energy")[-1])
    return 0


def cmd_entropy(args) -> int:
    fmap = loads_map(Path(args.input).read_text())
    rho, lt = args.basepoint_grid
    cfg = EntropyConfig(starts=args.starts, budget=args.optimizer_budget, rho_points=rho, logt_points=lt, seed=args.seed)
    rep = entropy(fmap, cfg)
    _write(args.output, rep.to_json() + "\n")
    return 0 if rep.status == "CONVERGED" else 1


def cmd_shoot(args) -> int:
    prob = ShootingProblem(m=args.m, r_max=args.rmax, J=args.J)
    try:
        prof, fit = shoot_equivariant_soliton(prob)
    except NoSolutionInBracket as exc:
        log.error("%s", exc)
        return 1
    _write(args.output, dumps_map(prof) + "\n")
    if args.fit:
        _write(args.fit, fit.to_json() + "\n")
    return 0


def cmd_stability(args) -> int:
    fmap = loads_map(Path(args.input).read_text())
    fields = tuple(f.strip() for f in args.fields.split(",") if f.strip())
    bad = set(fields) - {"conformal", "translations", "dilation"}
    if bad:
        raise ConfigError(f"unknown field group(s): {', '.join(sorted(bad))}")
    if args.sector == "grid":
        fmap = profile_to_grid(fmap, N=args.grid_n, R_max=min(fmap.R_max, 6.0))
    rep = stability_report(fmap, fields=fields, sharp=args.sharp)
    _write(args.output, rep.to_json() + "\n")
    return 0


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if cfg.experiment != args.name:
        raise ConfigError(f"config describes {cfg.experiment!r}, not {args.name!r}")
    res = run_experiment(cfg, args.output_dir)
    checks = res.get("checks", {})
    for k, v in checks.items():
        log.info("%-34s %s", k, "PASS" if v else "FAIL")
    return 0 if res.get("passed") else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmentropy", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", help="run the heat flow on a map JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--max-time", type=float, required=True)
    p.add_argument("--energy-below", type=float)
    p.add_argument("--gradient-below", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-start", type=float, default=0.0)
    p.add_argument("--cadence", type=int, default=100)
    p.add_argument("--trace", default="-", help="CSV path ('-' for stdout)")
    p.add_argument("--output", help="final state JSON")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("entropy", help="entropy report of a map JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--basepoint-grid", type=_grid_shape, default=(21, 21))
    p.add_argument("--optimizer-budget", type=int, default=500)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("soliton-shoot", help="shoot an equivariant soliton")
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--rmax", type=float)
    p.add_argument("--J", type=int)
    p.add_argument("--output", default="-")
    p.add_argument("--fit", help="SolitonFit JSON path")
    p.set_defaults(func=cmd_shoot)

    p = sub.add_parser("stability", help="stability report of a soliton JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--sector", choices=("equivariant", "grid"), default="equivariant")
    p.add_argument("--grid-n", type=int, default=17)
    p.add_argument("--fields", default="conformal,translations,dilation")
    p.add_argument("--sharp", action="store_true", help="use the -1 threshold")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("experiment", help="run a named experiment from a YAML config")
    p.add_argument("name", choices=EXPERIMENTS)
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    np.seterr(over="ignore")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return 2
    except HMError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
