"""Closed-loop episode runner.

Per 10 ms control tick: measure the truth, update the observer with the
control applied during the previous tick, evaluate the TVLQR feedback and
apply the wheel torque. Every 100 ms the thruster demand is netted,
clamped, sigma-delta modulated and the valves are latched for the period.
The plant advances in 1 ms RK4 steps throughout.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..estimate import KfConfig, Observer
from ..model import CONTROL_NAMES, N_THRUSTERS, NU, NX, STATE_NAMES, PlatformParams
from ..modulate import SigmaDeltaModulator, allocate
from ..track import GainSchedule, feedback
from .heightmap import Heightmap, slope_force
from .plant import NoiseConfig, measure, step_plant

LOG_TAG = "floatgnc-simlog v1"


class SimContractError(RuntimeError):
    """A module contract was violated during an episode; ``tick`` locates it."""

    def __init__(self, tick: int, message: str):
        super().__init__(f"tick {tick}: {message}")
        self.tick = tick


@dataclass(frozen=True)
class HeightmapConfig:
    kind: str = "flat"                 # flat | slope | random
    gradient: tuple = (0.0, 0.0)       # for kind == "slope"
    max_slope: float = 1e-3            # for kind == "random"
    seed: int = 0
    half_extent: float = 20.0
    cell: float = 0.5

    def __post_init__(self):
        if self.kind not in ("flat", "slope", "random"):
            raise ValueError("heightmap kind must be flat, slope or random")
        object.__setattr__(self, "gradient", tuple(float(v) for v in self.gradient))

    def build(self) -> Heightmap:
        if self.kind == "flat":
            return Heightmap.flat(self.half_extent, self.cell)
        if self.kind == "slope":
            return Heightmap.uniform_slope(self.gradient, self.half_extent, self.cell)
        rng = np.random.default_rng(self.seed)
        return Heightmap.random_field(rng, self.max_slope, self.half_extent, self.cell)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gradient": list(self.gradient), "max_slope": self.max_slope,
                "seed": self.seed, "half_extent": self.half_extent, "cell": self.cell}


@dataclass(frozen=True)
class SimConfig:
    plant_dt: float = 0.001
    control_hz: float = 100.0
    modulator_hz: float = 10.0
    duration: float = 60.0
    seed: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    heightmap: HeightmapConfig = field(default_factory=HeightmapConfig)
    wheel_spinup: bool = False
    controller: bool = True

    def __post_init__(self):
        if not (self.plant_dt > 0 and self.control_hz > 0 and self.modulator_hz > 0):
            raise ValueError("rates must be positive")
        if not self.duration >= 0:
            raise ValueError("duration must be non-negative")
        sub = 1.0 / (self.control_hz * self.plant_dt)
        per = self.control_hz / self.modulator_hz
        if abs(sub - round(sub)) > 1e-9 or abs(per - round(per)) > 1e-9:
            raise ValueError("control periods must be integer multiples of the plant step")

    @property
    def substeps(self) -> int:
        return int(round(1.0 / (self.control_hz * self.plant_dt)))

    @property
    def ticks_per_modulation(self) -> int:
        return int(round(self.control_hz / self.modulator_hz))

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration * self.control_hz))

    def with_(self, **kw) -> SimConfig:
        return replace(self, **kw)


def _columns():
    cols = ["t"]
    cols += [f"true_{n}" for n in STATE_NAMES]
    cols += [f"est_{n}" for n in STATE_NAMES]
    cols += [f"var_{n}" for n in STATE_NAMES]
    cols += [f"ref_{n}" for n in STATE_NAMES]
    cols += [f"cmd_{n}" for n in CONTROL_NAMES]
    cols += ["tau_applied"]
    cols += [f"valve{i}" for i in range(N_THRUSTERS)]
    cols += ["slope_fx", "slope_fy", "disturbance"]
    cols += ["innov_x", "innov_y", "innov_theta", "innov_omega_rw"]
    cols += ["gate_x", "gate_y", "gate_theta", "gate_omega_rw"]
    cols += ["regulation", "off_map"]
    return tuple(cols)


LOG_COLUMNS = _columns()


@dataclass
class SimLog:
    """One row per control tick; columns listed in ``LOG_COLUMNS``."""

    data: np.ndarray
    meta: dict = field(default_factory=dict)
    columns: tuple = LOG_COLUMNS

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(self.columns))

    def col(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"log has no column {name!r}") from None

    def block(self, prefix: str, names) -> np.ndarray:
        return np.column_stack([self.col(prefix + n) for n in names])

    @property
    def t(self) -> np.ndarray:
        return self.col("t")

    @property
    def truth(self) -> np.ndarray:
        return self.block("true_", STATE_NAMES)

    @property
    def estimate(self) -> np.ndarray:
        return self.block("est_", STATE_NAMES)

    @property
    def reference(self) -> np.ndarray:
        return self.block("ref_", STATE_NAMES)

    @property
    def valves(self) -> np.ndarray:
        return self.block("valve", [str(i) for i in range(N_THRUSTERS)]).astype(bool)

    def to_text(self) -> str:
        buf = io.StringIO()
        meta = " ".join(f"{k}={v}" for k, v in sorted(self.meta.items()))
        buf.write(f"# {LOG_TAG} {meta}\n".rstrip() + "\n")
        buf.write(",".join(self.columns) + "\n")
        np.savetxt(buf, self.data, fmt="%.17g", delimiter=",")
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> SimLog:
        lines = text.splitlines()
        meta = {}
        body = [ln for ln in lines if ln and not ln.startswith("#")]
        for ln in lines:
            if ln.startswith(f"# {LOG_TAG}"):
                for tok in ln[len(LOG_TAG) + 2:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
        if not body:
            raise ValueError("empty log")
        cols = tuple(c.strip() for c in body[0].split(","))
        rows = np.loadtxt(io.StringIO("\n".join(body[1:])), delimiter=",", ndmin=2) \
            if len(body) > 1 else np.zeros((0, len(cols)))
        return cls(rows.reshape(-1, len(cols)), meta, cols)

    @classmethod
    def load(cls, path) -> SimLog:
        return cls.from_text(Path(path).read_text())


def _event_wrench(events, ms: int, dt: float):
    """Total disturbance wrench active during the plant step starting at ``ms``."""
    w = np.zeros(3)
    active = False
    for ev in events:
        a = int(round(ev.start / dt))
        b = a + max(1, int(round(ev.duration / dt)))
        if a <= ms < b:
            w += (ev.force[0], ev.force[1], ev.torque)
            active = True
    return w, active


def run_episode(schedule: GainSchedule | None, config: SimConfig, params: PlatformParams,
                initial_state=None, kf_config: KfConfig = KfConfig(), events=(),
                heightmap: Heightmap | None = None, backend=None) -> SimLog:
    """Simulate one closed-loop episode.

    Args:
        schedule: TVLQR schedule to follow; ``None`` disables feedback, as
            does ``config.controller = False``.
        config: Rates, duration, noise, floor and seed.
        initial_state: Truth at t = 0 (origin at rest by default).
        events: ``DisturbanceEvent`` instances.
        heightmap: Overrides ``config.heightmap`` when given.

    Raises:
        SimContractError: on a violated module contract, with the tick index.
    """
    rng = np.random.default_rng(config.seed)
    hmap = heightmap if heightmap is not None else config.heightmap.build()
    truth = np.zeros(NX) if initial_state is None else np.array(initial_state, dtype=float)
    if truth.shape != (NX,) or not np.all(np.isfinite(truth)):
        raise SimContractError(0, "initial state must be 7 finite values")
    if config.wheel_spinup and initial_state is None:
        truth[6] = 0.5 * params.wheel_speed_max
    events = tuple(events)
    control_on = config.controller and schedule is not None
    observer = Observer(params, kf_config)
    mod = SigmaDeltaModulator(params.nominal_thrust, config.modulator_hz)
    valves = np.zeros(N_THRUSTERS, dtype=bool)
    tau_cmd = 0.0
    tau_applied = 0.0
    dt_tick = 1.0 / config.control_hz
    sub = config.substeps
    rows = np.empty((config.n_ticks + 1, len(LOG_COLUMNS)))
    u_applied = np.zeros(NU)
    for k in range(config.n_ticks + 1):
        t = k * dt_tick
        truth_log = truth.copy()
        meas = measure(truth, config.noise, rng)
        est = observer.step(meas, u_applied, dt_tick)
        info = observer.last_info
        x_est = est.state
        if control_on:
            u = feedback(schedule, t, x_est)
            if not np.all(np.isfinite(u)):
                raise SimContractError(k, "non-finite feedback command")
            regulating = schedule.in_regulation(t)
            if regulating:
                ref = schedule.x_reg
            else:
                ref = schedule.x_ref[schedule.index(t)]
            tau_cmd = float(np.clip(u[0], -params.wheel_torque_max, params.wheel_torque_max))
            if k % config.ticks_per_modulation == 0:
                try:
                    valves = mod.step(allocate(u[1:], params.nominal_thrust))
                except ValueError as exc:
                    raise SimContractError(k, str(exc)) from exc
        else:
            u = np.zeros(NU)
            regulating = True
            ref = np.zeros(NX) if schedule is None else schedule.x_reg
            tau_cmd = 0.0
            valves = np.zeros(N_THRUSTERS, dtype=bool)

        slope, _ = slope_force(truth[:2], hmap, params.mass, params.gravity)
        dist_any = False
        off_map = False
        if k < config.n_ticks:
            # integrate to the next tick, split where the disturbance changes
            for n, w, active in _segments(events, k * sub, sub, config.plant_dt):
                truth, tau_applied, om = step_plant(truth, valves, tau_cmd, w, hmap, params,
                                                    config.plant_dt, n, backend=backend)
                dist_any |= active
                off_map |= om
        if not np.all(np.isfinite(truth)):
            raise SimContractError(k, "plant state became non-finite")
        rows[k] = np.concatenate([
            [t], truth_log, x_est, np.diag(est.covariance), ref, u, [tau_applied],
            valves.astype(float), slope, [float(dist_any)], info.innovation,
            np.array(info.gated, dtype=float), [float(regulating), float(off_map)],
        ])
        u_applied = np.r_[tau_applied, valves * params.nominal_thrust]
    meta = {"seed": config.seed, "duration": config.duration,
            "final_time": 0.0 if schedule is None else schedule.final_time,
            "controller": int(control_on)}
    return SimLog(rows, meta)


def _segments(events, ms0: int, n: int, dt: float):
    """Split ``n`` plant steps from step ``ms0`` into runs of constant disturbance."""
    out = []
    for j in range(n):
        w, active = _event_wrench(events, ms0 + j, dt)
        if out and out[-1][2] == active and np.array_equal(out[-1][1], w):
            out[-1][0] += 1
        else:
            out.append([1, w, active])
    return out
