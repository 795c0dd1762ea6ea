"""TOML configuration for every module, plus the bundled scenarios.

A config file may contain any of the tables below; missing tables and keys
take their defaults::

    preset = "simulation"             # TVLQR weight set
    [platform]   mass, body_inertia, ...
    [plan]       n_knots, alpha, time_regularization, initialization, fuel_weights
    [plan.solver] constraint_tol, optimality_tol, max_outer, ...
    [tvlqr]      Q, R, Q_final, R_final, regulation
    [observer]   Q, R, P0, gate_sigma
    [sim]        plant_dt, control_hz, modulator_hz, duration, seed, wheel_spinup, controller
    [sim.noise]  var_x, var_y, var_theta, var_omega
    [sim.heightmap] kind, gradient, max_slope, seed, half_extent, cell
    [scenario]   x_init, x_final, hold, band_window
    [[scenario.events]] start, duration, force, torque
    [montecarlo] n, x_range, y_range, theta_range, time_limit, master_seed, workers
    [success]    lin, lin_vel, ang, ang_vel, debounce
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .estimate import KfConfig
from .metrics import SuccessThresholds
from .model import NX, PlatformParams
from .plan.nlp import SolverOptions
from .plan.planner import PlanOptions
from .simworld import DisturbanceEvent, HeightmapConfig, NoiseConfig, SimConfig
from .track import TvlqrWeights

PRESETS = ("simulation", "real-system")


@dataclass(frozen=True)
class Scenario:
    """Boundary states, disturbances and evaluation windows of one run.

    ``hold`` extends a followed episode past the end of the reference.
    """

    x_init: tuple = (0.0,) * NX
    x_final: tuple = (0.0,) * NX
    events: tuple = ()
    hold: float = 0.0
    band_window: float = 60.0

    def __post_init__(self):
        for name in ("x_init", "x_final"):
            v = tuple(float(a) for a in getattr(self, name))
            if len(v) != NX or not np.all(np.isfinite(v)):
                raise ValueError(f"scenario {name} needs {NX} finite values")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "events", tuple(
            e if isinstance(e, DisturbanceEvent) else DisturbanceEvent.from_dict(e)
            for e in self.events))
        if not (self.hold >= 0 and self.band_window >= 0):
            raise ValueError("hold and band_window must be non-negative")

    def to_dict(self) -> dict:
        return {"x_init": list(self.x_init), "x_final": list(self.x_final),
                "events": [e.to_dict() for e in self.events], "hold": self.hold,
                "band_window": self.band_window}


@dataclass(frozen=True)
class MonteCarloSpec:
    n: int = 20
    x_range: tuple = (-2.0, 2.0)
    y_range: tuple = (-4.0, 4.0)
    theta_range: tuple = (-np.pi, np.pi)
    time_limit: float = 140.0
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("x_range", "y_range", "theta_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo <= hi:
                raise ValueError(f"{name} must satisfy lower <= upper")
            object.__setattr__(self, name, (lo, hi))
        if self.n < 1 or self.workers < 1:
            raise ValueError("n and workers must be >= 1")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")

    def to_dict(self) -> dict:
        return {"n": self.n, "x_range": list(self.x_range), "y_range": list(self.y_range),
                "theta_range": list(self.theta_range), "time_limit": self.time_limit,
                "master_seed": self.master_seed, "workers": self.workers}


@dataclass(frozen=True)
class Config:
    preset: str = "simulation"
    platform: PlatformParams = field(default_factory=PlatformParams)
    plan: PlanOptions = field(default_factory=PlanOptions)
    tvlqr: TvlqrWeights = field(default_factory=TvlqrWeights.preset)
    observer: KfConfig = field(default_factory=KfConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    scenario: Scenario = field(default_factory=Scenario)
    montecarlo: MonteCarloSpec = field(default_factory=MonteCarloSpec)
    success: SuccessThresholds = field(default_factory=SuccessThresholds)

    def with_seed(self, seed: int) -> Config:
        return replace(self, sim=replace(self.sim, seed=int(seed)),
                       montecarlo=replace(self.montecarlo, master_seed=int(seed)))

    def with_preset(self, preset: str) -> Config:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}")
        return replace(self, preset=preset, tvlqr=TvlqrWeights.preset(preset))


def _check_keys(table: dict, allowed, where: str):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ValueError(f"unknown keys in [{where}]: {sorted(unknown)}")


def _names(cls):
    return [f.name for f in fields(cls)]


def to_dict(cfg: Config) -> dict:
    plan = cfg.plan
    sim = cfg.sim
    return {
        "preset": cfg.preset,
        "platform": cfg.platform.to_dict(),
        "plan": {"n_knots": plan.n_knots, "alpha": plan.alpha,
                 "time_regularization": plan.time_regularization,
                 "initialization": plan.initialization,
                 "fuel_weights": [float(v) for v in plan.fuel_weights],
                 "solver": asdict(plan.solver)},
        "tvlqr": cfg.tvlqr.to_dict(),
        "observer": cfg.observer.to_dict(),
        "sim": {"plant_dt": sim.plant_dt, "control_hz": sim.control_hz,
                "modulator_hz": sim.modulator_hz, "duration": sim.duration, "seed": sim.seed,
                "wheel_spinup": sim.wheel_spinup, "controller": sim.controller,
                "noise": asdict(sim.noise), "heightmap": sim.heightmap.to_dict()},
        "scenario": cfg.scenario.to_dict(),
        "montecarlo": cfg.montecarlo.to_dict(),
        "success": cfg.success.to_dict(),
    }


def from_dict(data: dict) -> Config:
    """Build a ``Config``; unknown keys are rejected so typos surface early."""
    _check_keys(data, _names(Config), "root")
    preset = data.get("preset", "simulation")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    kw = {"preset": preset}
    if "platform" in data:
        kw["platform"] = PlatformParams.from_dict(data["platform"])
    if "plan" in data:
        p = dict(data["plan"])
        _check_keys(p, ["n_knots", "alpha", "time_regularization", "initialization",
                        "fuel_weights", "solver"], "plan")
        solver = p.pop("solver", {})
        _check_keys(solver, _names(SolverOptions), "plan.solver")
        if "fuel_weights" in p:
            p["fuel_weights"] = np.asarray(p["fuel_weights"], dtype=float)
        kw["plan"] = PlanOptions(solver=SolverOptions(**solver), **p)
    base = TvlqrWeights.preset(preset)
    kw["tvlqr"] = TvlqrWeights.from_dict({**base.to_dict(), **data.get("tvlqr", {})})
    if "observer" in data:
        kw["observer"] = KfConfig.from_dict(data["observer"])
    if "sim" in data:
        s = dict(data["sim"])
        _check_keys(s, _names(SimConfig), "sim")
        if "noise" in s:
            _check_keys(s["noise"], _names(NoiseConfig), "sim.noise")
            s["noise"] = NoiseConfig(**s["noise"])
        if "heightmap" in s:
            _check_keys(s["heightmap"], _names(HeightmapConfig), "sim.heightmap")
            s["heightmap"] = HeightmapConfig(**s["heightmap"])
        kw["sim"] = SimConfig(**s)
    if "scenario" in data:
        _check_keys(data["scenario"], _names(Scenario), "scenario")
        kw["scenario"] = Scenario(**data["scenario"])
    if "montecarlo" in data:
        _check_keys(data["montecarlo"], _names(MonteCarloSpec), "montecarlo")
        kw["montecarlo"] = MonteCarloSpec(**data["montecarlo"])
    if "success" in data:
        _check_keys(data["success"], _names(SuccessThresholds), "success")
        kw["success"] = SuccessThresholds(**data["success"])
    return Config(**kw)


def loads(text: str) -> Config:
    return from_dict(tomllib.loads(text))


def dumps(cfg: Config) -> str:
    return tomli_w.dumps(to_dict(cfg))


def builtin_scenarios() -> list[str]:
    root = resources.files("floatgnc") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load(path_or_name) -> Config:
    """Read a config file, or a bundled scenario by name (e.g. ``straight_line``)."""
    p = Path(path_or_name)
    if p.exists():
        return loads(p.read_text())
    name = str(path_or_name)
    if name in builtin_scenarios():
        return loads((resources.files("floatgnc") / "scenarios" / f"{name}.toml").read_text())
    raise FileNotFoundError(f"no config file or bundled scenario named {name!r}")


def save(cfg: Config, path) -> None:
    Path(path).write_text(dumps(cfg))
