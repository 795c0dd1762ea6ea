"""``floatgnc`` command-line scenario runner.

Exit codes: 0 success, 2 usage error, 3 planning failure, 4 simulation
contract violation, 5 acceptance thresholds not met, 6 invalid input file.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np
import tomli_w

from . import config as config_mod
from . import runner
from .metrics import thruster_on_time
from .model import N_THRUSTERS, STATE_NAMES
from .plan.collocation import default_boundary
from .plan.planner import PlanningError, validate_trajectory
from .plan.trajectory import Trajectory
from .simworld import SimContractError, SimLog

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PLAN = 3
EXIT_SIM = 4
EXIT_THRESHOLD = 5
EXIT_INPUT = 6

log = logging.getLogger("floatgnc")


class InputError(RuntimeError):
    pass


def _load_config(args) -> config_mod.Config:
    cfg = config_mod.load(args.config) if args.config else config_mod.Config()
    if args.preset:
        cfg = cfg.with_preset(args.preset)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _write_report(path: Path, report: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(tomli_w.dumps(report))


def _load_trajectory(path) -> Trajectory:
    try:
        traj = Trajectory.load(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read trajectory {path}: {exc}") from exc
    return traj


def _revalidate(traj: Trajectory, cfg) -> dict:
    b = default_boundary(traj.states[0], traj.states[-1], cfg.platform)
    try:
        return validate_trajectory(traj, b, cfg.platform)
    except ValueError as exc:
        raise InputError(f"trajectory rejected: {exc}") from exc


def cmd_plan(args, cfg) -> int:
    res = runner.plan(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.trajectory.save(out / "trajectory.txt")
    if res.time_optimal is not None:
        res.time_optimal.save(out / "trajectory_time_optimal.txt")
    report = {
        "optimal_time": res.optimal_time,
        "final_time": res.trajectory.final_time,
        "fuel": res.fuel,
        "time_optimal_fuel": res.time_optimal_fuel,
        "max_defect": float(res.phases.get("fuel", {}).get("max_defect", 0.0)),
    }
    _write_report(out / "plan_report.toml", report)
    print(f"t_f* = {res.optimal_time:.6f} s  t_f,des = {res.trajectory.final_time:.6f} s  "
          f"fuel = {res.fuel:.6g}  max defect = {report['max_defect']:.3e}")
    return EXIT_OK


def cmd_follow(args, cfg) -> int:
    traj = _load_trajectory(args.trajectory)
    _revalidate(traj, cfg)
    slog, rep = runner.follow(cfg, traj, cache_dir=args.cache)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    slog.save(out / "follow_log.csv")
    _write_report(out / "follow_report.toml", rep.to_dict())
    deg = math.degrees(rep.mean_angular_error)
    print(f"mean euclidean error = {rep.mean_euclidean_error:.4f} m  mean angular error = "
          f"{deg:.3f} deg  on-time = {rep.total_on_time:.2f} s "
          f"(optimal {rep.extra['optimal_on_time']:.2f} s)")
    ok = rep.mean_euclidean_error <= args.max_euclidean and deg <= args.max_angular_deg
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_stabilize(args, cfg) -> int:
    slog, rep = runner.stabilize(cfg, controller=not args.no_controller)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    slog.save(out / "stabilize_log.csv")
    _write_report(out / "stabilize_report.toml", rep.to_dict())
    print(f"max excursion = {rep.max_excursion:.4f} m  rotation = "
          f"{math.degrees(rep.max_rotation):.1f} deg  band = {rep.band_position:.4f} m / "
          f"{math.degrees(rep.band_angle):.2f} deg")
    if args.no_controller:
        return EXIT_OK
    ok = rep.band_position <= args.band_m and math.degrees(rep.band_angle) <= args.band_deg
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_montecarlo(args, cfg) -> int:
    out = Path(args.out)
    result = runner.montecarlo(cfg, out, workers=args.workers)
    agg = result["aggregate"]
    _write_report(out / "montecarlo_report.toml",
                  {"aggregate": agg, "episodes": result["episodes"]})
    print(f"success rate = {100 * agg['success_rate']:.1f}%  max time-to-success = "
          f"{agg['time_to_success_max']:.2f} s  ({result['timing']['wall_seconds']:.0f} s wall)")
    return EXIT_OK if agg["all_within_limit"] else EXIT_THRESHOLD


REQUIRED_COLUMNS = ("t", "true_x", "true_y", "tau_applied", "true_omega_rw", "cmd_tau") + tuple(
    f"valve{i}" for i in range(N_THRUSTERS))


def export_plot_data(slog: SimLog, out_dir: Path, stem: str) -> dict:
    """Write plot-ready columnar files for one log; returns the paths written."""
    missing = [c for c in REQUIRED_COLUMNS if c not in slog.columns]
    if missing:
        raise InputError(f"log {stem} is missing columns: {', '.join(missing)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    t = slog.t
    paths = {}

    def write(name, header, rows):
        p = out_dir / f"{stem}_{name}.csv"
        with open(p, "w") as fh:
            fh.write(",".join(header) + "\n")
            np.savetxt(fh, np.asarray(rows, dtype=float).reshape(-1, len(header)),
                       fmt="%.17g", delimiter=",")
        paths[name] = p

    write("ground_track", ("t", "x", "y"), np.column_stack([t, slog.col("true_x"), slog.col("true_y")]))
    series_cols = [f"{p}_{n}" for p in ("true", "est", "ref") for n in STATE_NAMES]
    series_cols = [c for c in series_cols if c in slog.columns]
    write("series", ("t",) + tuple(series_cols),
          np.column_stack([t] + [slog.col(c) for c in series_cols]))
    write("wheel", ("t", "cmd_tau", "tau_applied", "omega_rw"),
          np.column_stack([t, slog.col("cmd_tau"), slog.col("tau_applied"), slog.col("true_omega_rw")]))
    # one raster row per valve state change, starting from all valves closed
    V = slog.valves
    prev = np.vstack([np.zeros((1, N_THRUSTERS), dtype=bool), V[:-1]])
    k, j = np.nonzero(V != prev)
    order = np.lexsort((j, k))
    write("raster", ("t", "thruster", "open"), np.column_stack([t[k[order]], j[order], V[k[order], j[order]]]))
    on = thruster_on_time(slog)
    write("ontime", ("thruster", "on_time"), np.column_stack([np.arange(N_THRUSTERS), on]))
    return paths


def cmd_export_plots(args, cfg) -> int:
    out = Path(args.out)
    for f in args.logs:
        try:
            slog = SimLog.load(f)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read log {f}: {exc}") from exc
        paths = export_plot_data(slog, out, Path(f).stem)
        print(f"{f}: " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_validate(args, cfg) -> int:
    traj = _load_trajectory(args.trajectory)
    rep = _revalidate(traj, cfg)
    print(f"valid: max defect = {rep['max_defect']:.3e}  bound violation = "
          f"{rep['bound_violation']:.3e}  boundary residual = {rep['boundary_residual']:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    def flags(suppress):
        # subcommands re-declare the globals without defaults, so either position works
        d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--config", default=d(None), help="TOML config file or bundled scenario name")
        g.add_argument("--seed", type=int, default=d(None),
                       help="override the simulation and Monte-Carlo seeds")
        g.add_argument("--out", default=d("out"), help="output directory (default: out)")
        g.add_argument("--preset", choices=config_mod.PRESETS, default=d(None), help="TVLQR weight set")
        g.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return g

    common = flags(True)
    p = argparse.ArgumentParser(prog="floatgnc", description=__doc__.splitlines()[0],
                                parents=[flags(False)])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("plan", parents=[common], help="plan the scenario's two-phase trajectory")

    f = sub.add_parser("follow", parents=[common], help="follow a trajectory file in simulation")
    f.add_argument("trajectory")
    f.add_argument("--cache", help="directory for cached gain schedules")
    f.add_argument("--max-euclidean", type=float, default=0.16, help="m (default 0.16)")
    f.add_argument("--max-angular-deg", type=float, default=5.0, help="deg (default 5)")

    s = sub.add_parser("stabilize", parents=[common], help="regulation under a disturbance")
    s.add_argument("--no-controller", action="store_true", help="uncontrolled baseline")
    s.add_argument("--band-m", type=float, default=0.10)
    s.add_argument("--band-deg", type=float, default=6.0)

    m = sub.add_parser("montecarlo", parents=[common], help="random-spawn study")
    m.add_argument("--workers", type=int, help="parallel episodes (default from config)")

    e = sub.add_parser("export-plots", parents=[common], help="plot-ready data from logs")
    e.add_argument("logs", nargs="+")

    v = sub.add_parser("validate", parents=[common], help="re-check a trajectory file")
    v.add_argument("trajectory")
    return p


COMMANDS = {
    "plan": cmd_plan, "follow": cmd_follow, "stabilize": cmd_stabilize,
    "montecarlo": cmd_montecarlo, "export-plots": cmd_export_plots, "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except PlanningError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_PLAN
    except SimContractError as exc:
        print(f"simulation contract violated: {exc}", file=sys.stderr)
        return EXIT_SIM
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
