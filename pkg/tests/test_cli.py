import math
import sys
from dataclasses import replace

import numpy as np
import pytest

from floatgnc import cli, runner
from floatgnc import config as C
from floatgnc.plan.nlp import SolverOptions
from floatgnc.plan.planner import PlanOptions
from floatgnc.plan.trajectory import Trajectory
from floatgnc.simworld import HeightmapConfig, NoiseConfig, SimContractError, SimLog

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ONE_M = C.Scenario(x_final=(1.0, 0, 0, 0, 0, 0, 0))


def write_cfg(path, **kw):
    cfg = C.Config(scenario=ONE_M, plan=PlanOptions(n_knots=40), **kw)
    C.save(cfg, path)
    return str(path)


def report(path):
    return tomllib.loads(path.read_text())


@pytest.fixture(scope="module")
def planned(tmp_path_factory):
    d = tmp_path_factory.mktemp("plan")
    cfg = write_cfg(d / "cfg.toml")
    assert cli.main(["--config", cfg, "--out", str(d / "a"), "plan"]) == 0
    return d, cfg


@pytest.fixture(scope="module")
def followed(planned):
    d, _ = planned
    cfg = write_cfg(d / "quiet.toml", sim=C.SimConfig(noise=NoiseConfig.none(), seed=3))
    out = d / "follow"
    code = cli.main(["follow", str(d / "a" / "trajectory.txt"), "--config", cfg, "--out", str(out),
                     "--cache", str(d / "cache")])
    return code, out


def test_plan_outputs_and_bracket(planned):
    d, _ = planned
    rep = report(d / "a" / "plan_report.toml")
    assert 5.60 <= rep["optimal_time"] <= 6.66
    assert rep["final_time"] == pytest.approx(1.5 * rep["optimal_time"])
    assert rep["max_defect"] <= 1e-6
    assert (d / "a" / "trajectory_time_optimal.txt").exists()


def test_plan_is_byte_identical(planned):
    d, cfg = planned
    assert cli.main(["plan", "--config", cfg, "--out", str(d / "b")]) == 0
    for name in ("trajectory.txt", "trajectory_time_optimal.txt", "plan_report.toml"):
        assert (d / "a" / name).read_bytes() == (d / "b" / name).read_bytes()


def test_origin_to_origin_plan(tmp_path):
    cfg = C.Config(scenario=C.Scenario())
    C.save(cfg, tmp_path / "c.toml")
    assert cli.main(["plan", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path)]) == 0
    rep = report(tmp_path / "plan_report.toml")
    assert rep["final_time"] == 0.0 and rep["fuel"] == 0.0
    traj = Trajectory.load(tmp_path / "trajectory.txt")
    assert traj.is_null


def test_plan_failure_exit_code(tmp_path, capsys):
    cfg = C.Config(scenario=ONE_M, plan=PlanOptions(n_knots=20, solver=SolverOptions(max_outer=1)))
    C.save(cfg, tmp_path / "c.toml")
    assert cli.main(["plan", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path)]) == cli.EXIT_PLAN
    assert "planning failed" in capsys.readouterr().err


def test_validate(planned, tmp_path):
    d, cfg = planned
    assert cli.main(["validate", str(d / "a" / "trajectory.txt"), "--config", cfg]) == 0
    traj = Trajectory.load(d / "a" / "trajectory.txt")
    X = traj.states.copy()
    X[len(X) // 2, 0] += 0.01
    Trajectory(traj.times, X, traj.controls).save(tmp_path / "bad.txt")
    assert cli.main(["validate", str(tmp_path / "bad.txt")]) == cli.EXIT_INPUT
    (tmp_path / "junk.txt").write_text("not a trajectory\n")
    assert cli.main(["validate", str(tmp_path / "junk.txt")]) == cli.EXIT_INPUT
    assert cli.main(["validate", str(tmp_path / "missing.txt")]) == cli.EXIT_INPUT


def test_follow_rejects_malformed(planned, tmp_path):
    d, cfg = planned
    traj = Trajectory.load(d / "a" / "trajectory.txt")
    U = traj.controls.copy()
    U[3, 1] += 2.0
    Trajectory(traj.times, traj.states, U).save(tmp_path / "bad.txt")
    assert cli.main(["follow", str(tmp_path / "bad.txt"), "--out", str(tmp_path)]) == cli.EXIT_INPUT
    assert not (tmp_path / "follow_log.csv").exists()


def test_noiseless_follow(followed, planned):
    code, out = followed
    assert code == 0
    rep = report(out / "follow_report.toml")
    assert rep["mean_euclidean_error"] <= 0.02
    assert rep["total_on_time"] >= rep["optimal_on_time"]
    assert len(list((planned[0] / "cache").glob("gains-*.txt"))) == 1


def test_follow_threshold_exit_code(planned, tmp_path):
    d, cfg = planned
    code = cli.main(["follow", str(d / "a" / "trajectory.txt"), "--config", cfg, "--out", str(tmp_path),
                     "--max-euclidean", "0", "--cache", str(d / "cache")])
    assert code == cli.EXIT_THRESHOLD


def test_sim_contract_exit_code(planned, tmp_path, monkeypatch, capsys):
    d, cfg = planned

    def broken(*a, **k):
        raise SimContractError(17, "forced")

    monkeypatch.setattr(runner, "follow", broken)
    code = cli.main(["follow", str(d / "a" / "trajectory.txt"), "--config", cfg, "--out", str(tmp_path)])
    assert code == cli.EXIT_SIM
    assert "tick 17" in capsys.readouterr().err


def test_export_plots(followed, tmp_path):
    _, out = followed
    log_path = out / "follow_log.csv"
    assert cli.main(["export-plots", str(log_path), "--out", str(tmp_path)]) == 0
    slog = SimLog.load(log_path)
    track = np.loadtxt(tmp_path / "follow_log_ground_track.csv", delimiter=",", skiprows=1, ndmin=2)
    assert len(track) == len(slog.t)
    V = slog.valves
    changes = int(np.sum(V[0])) + int(np.sum(V[1:] != V[:-1]))
    raster = np.loadtxt(tmp_path / "follow_log_raster.csv", delimiter=",", skiprows=1, ndmin=2)
    assert len(raster) == changes > 0
    ontime = np.loadtxt(tmp_path / "follow_log_ontime.csv", delimiter=",", skiprows=1)
    rep = report(out / "follow_report.toml")
    assert np.array_equal(ontime[:, 1], np.array(rep["thruster_on_time"]))
    for name in ("series", "wheel"):
        assert (tmp_path / f"follow_log_{name}.csv").exists()


def test_export_missing_columns(tmp_path):
    slog = SimLog(np.zeros((2, 3)), columns=("t", "true_x", "true_y"))
    slog.save(tmp_path / "short.csv")
    assert cli.main(["export-plots", str(tmp_path / "short.csv"), "--out", str(tmp_path)]) == cli.EXIT_INPUT


def test_stabilize_quiet_never_fires(tmp_path):
    cfg = C.Config(sim=C.SimConfig(duration=60.0, noise=NoiseConfig.none()))
    C.save(cfg, tmp_path / "c.toml")
    assert cli.main(["stabilize", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path)]) == 0
    rep = report(tmp_path / "stabilize_report.toml")
    assert rep["total_on_time"] == 0.0 and rep["max_excursion"] == 0.0


def test_stabilize_baseline_and_threshold(tmp_path):
    assert cli.main(["stabilize", "--config", "stabilization", "--no-controller",
                     "--out", str(tmp_path / "off")]) == 0
    off = report(tmp_path / "off" / "stabilize_report.toml")
    assert off["max_excursion"] > 1.5 and off["max_rotation"] > 2 * math.pi
    cfg = C.load("stabilization")
    cfg = replace(cfg, sim=replace(cfg.sim, duration=10.0))
    C.save(cfg, tmp_path / "short.toml")
    code = cli.main(["stabilize", "--config", str(tmp_path / "short.toml"), "--band-m", "1e-6",
                     "--out", str(tmp_path / "on")])
    assert code == cli.EXIT_THRESHOLD


def test_global_flags_in_either_position(tmp_path):
    cfg = C.Config(sim=C.SimConfig(duration=1.0))
    C.save(cfg, tmp_path / "c.toml")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["--seed", "5", "--config", str(tmp_path / "c.toml"), "--out", str(a), "stabilize"]) == 0
    assert cli.main(["stabilize", "--seed", "5", "--config", str(tmp_path / "c.toml"), "--out", str(b)]) == 0
    la, lb = (a / "stabilize_log.csv").read_bytes(), (b / "stabilize_log.csv").read_bytes()
    assert la == lb and b"seed=5" in la


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        cli.main(["plan", "--preset", "nope"])
    assert exc.value.code == cli.EXIT_USAGE
    assert cli.main(["plan", "--config", "no_such_file.toml"]) == cli.EXIT_INPUT


def test_montecarlo_parallel_matches_serial(tmp_path):
    cfg = C.Config(
        plan=PlanOptions(n_knots=30),
        sim=C.SimConfig(heightmap=HeightmapConfig("random", seed=3)),
        montecarlo=C.MonteCarloSpec(n=2, x_range=(-0.5, 0.5), y_range=(-0.5, 0.5),
                                    theta_range=(-0.5, 0.5), time_limit=40.0, master_seed=4),
    )
    C.save(cfg, tmp_path / "c.toml")
    assert cli.main(["montecarlo", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path / "s"),
                     "--workers", "1"]) == 0
    assert cli.main(["montecarlo", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path / "p"),
                     "--workers", "2"]) == 0
    rs = (tmp_path / "s" / "montecarlo_report.toml").read_bytes()
    assert rs == (tmp_path / "p" / "montecarlo_report.toml").read_bytes()
    rep = tomllib.loads(rs.decode())
    assert rep["aggregate"]["success_rate"] == 1.0
    for i in range(2):
        ep = tmp_path / "s" / f"episode-{i:04d}"
        assert (ep / "log.csv").read_bytes() == (tmp_path / "p" / f"episode-{i:04d}" / "log.csv").read_bytes()
