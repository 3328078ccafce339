"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .checks import report_dict, run_checks
from .config import ConfigError
from .plant import LinearPlant
from .sim import SimulationError, simulate, write_executions_csv, write_trajectory_csv
from .stats import (TABLE_HEADER, BatchSpec, Cell, StatsError, figure_series, run_table,
                    table_row)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _load(args) -> cfgmod.RunConfig:
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"check.seed={args.seed}")
    cfg = cfgmod.load_config(args.config, overrides)
    if args.out is not None:
        cfg.output.dir = args.out
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    """Run one simulation and write trajectory CSVs."""
    cfg = _load(args)
    plant = cfgmod.build_plant(cfg)
    gen = cfgmod.single_generator(cfg)
    x0 = cfgmod.single_x0(cfg)
    sim_cfg = cfgmod.build_sim_config(cfg)
    if len(x0) != plant.n:
        raise ConfigError(f"initial.x0 has length {len(x0)}, plant has {plant.n} states")
    traj = simulate(plant, gen, x0, sim_cfg)
    out = _outdir(cfg)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_executions_csv(traj, out / "executions.csv")
    iv = traj.inter_execution_times()
    print(f"status       {traj.status}")
    print(f"events       {traj.n_events}")
    if len(iv):
        print(f"min interval {iv.min():.6g} s")
        print(f"mean interval {iv.mean():.6g} s")
    print(f"final V      {traj.V_values[-1]:.6g}")
    print(f"wrote        {out / 'trajectory.csv'}, {out / 'executions.csv'}")
    return EXIT_OK


def cmd_table(args) -> int:
    """Run a generator grid over a set of initial conditions."""
    cfg = _load(args)
    plant = cfgmod.build_plant(cfg)
    gens = cfgmod.grid_generators(cfg)
    x0s = cfgmod.batch_initial_conditions(cfg, plant.n)
    spec = BatchSpec(plant, gens, x0s, cfgmod.build_sim_config(cfg))
    out = _outdir(cfg)
    final = out / "table.csv"
    partial = out / "table.csv.partial"
    total = len(gens)
    done = 0

    with open(partial, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_HEADER)
        fh.flush()

        def on_cell(cell: Cell):
            nonlocal done
            done += 1
            writer.writerow(table_row(cell))
            fh.flush()
            k = cell.key
            if cell.error:
                print(f"[{done}/{total}] {k.generator} sigma={k.sigma:g} theta={k.theta:g} "
                      f"ERROR {cell.error}", flush=True)
            else:
                s = cell.stats
                print(f"[{done}/{total}] {k.generator} sigma={k.sigma:g} theta={k.theta:g} "
                      f"mean={s.mean:.4f} sd={s.sd:.4f} cv={s.cv:.4f} n={s.count}", flush=True)

        cells = run_table(spec, jobs=args.jobs, on_cell=on_cell)

    with open(final, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_HEADER)
        for cell in cells.values():
            writer.writerow(table_row(cell))
    partial.unlink()
    print(f"wrote {final}")
    return EXIT_RUNTIME if any(c.error for c in cells.values()) else EXIT_OK


def cmd_check(args) -> int:
    """Run the numerical invariant suite."""
    cfg = _load(args)
    plant = cfgmod.build_plant(cfg)
    if not isinstance(plant, LinearPlant):
        raise ConfigError("check: the invariant suite needs a linear plant")
    report = run_checks(plant, cfg.check, cfgmod.build_sim_config(cfg))
    for r in report.results:
        print(r.line())
    out = _outdir(cfg)
    (out / "check_report.json").write_text(json.dumps(report_dict(report), indent=2))
    if report.passed:
        print("all checks passed")
        return EXIT_OK
    replay = out / "check_failures.json"
    replay.write_text(json.dumps({"config": cfg.to_dict(), "failures": report.failures()},
                                 indent=2))
    for fail in report.failures():
        w = fail["witnesses"][0]
        print(f"witness for {fail['check']}: {json.dumps(w)}")
    print(f"failing inputs written to {replay}")
    return EXIT_CHECK


def cmd_figure(args) -> int:
    """Write V and W series for static and dynamic generators."""
    cfg = _load(args)
    plant = cfgmod.build_plant(cfg)
    x0 = cfgmod.single_x0(cfg)
    series = figure_series(plant, cfgmod.figure_generators(cfg), x0,
                           cfgmod.build_sim_config(cfg))
    out = _outdir(cfg)
    V0 = series[0].V[0]
    for s in series:
        write_trajectory_csv(s.trajectory, out / f"figure_{s.label}.csv")
        write_executions_csv(s.trajectory, out / f"figure_{s.label}_executions.csv")
        print(f"{s.label:<32} events={s.trajectory.n_events:<6} "
              f"max V rise={s.max_rise() / V0:.4%} of V0  "
              f"excess variation={s.excess_variation() / V0:.4%} of V0")
    print(f"wrote {len(series)} series to {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "table": cmd_table,
    "check": cmd_check,
    "figure": cmd_figure,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynetc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        p.add_argument("--config", required=True,
                       help="run configuration (a path, or a bundled name such as "
                            "paper-example.cfg)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for table cells")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="override a config value; repeatable")
        p.add_argument("--seed", type=int, help="seed for randomized checks")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, StatsError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
