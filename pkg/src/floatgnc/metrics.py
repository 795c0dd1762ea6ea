"""Episode metrics, all computed from a ``SimLog`` alone."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import N_THRUSTERS, wrap_angle
from .plan.trajectory import Trajectory

DEBOUNCE = 1.0


@dataclass(frozen=True)
class SuccessThresholds:
    """Position (m), speed (m/s), heading (rad) and yaw-rate (rad/s) limits."""

    lin: float = 0.05
    lin_vel: float = 0.05
    ang: float = 0.05
    ang_vel: float = 0.05
    debounce: float = DEBOUNCE

    def __post_init__(self):
        for k in ("lin", "lin_vel", "ang", "ang_vel"):
            if not getattr(self, k) > 0:
                raise ValueError(f"threshold {k} must be positive")
        if not self.debounce >= 0:
            raise ValueError("debounce must be non-negative")

    def to_dict(self) -> dict:
        return {"lin": self.lin, "lin_vel": self.lin_vel, "ang": self.ang,
                "ang_vel": self.ang_vel, "debounce": self.debounce}


def success_mask(states, thresholds: SuccessThresholds = SuccessThresholds()) -> np.ndarray:
    """Per-sample predicate: all four thresholds met at once (strict)."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    return ((np.hypot(X[:, 0], X[:, 1]) < thresholds.lin)
            & (np.hypot(X[:, 3], X[:, 4]) < thresholds.lin_vel)
            & (np.abs(wrap_angle(X[:, 2])) < thresholds.ang)
            & (np.abs(X[:, 5]) < thresholds.ang_vel))


def time_to_success(t, mask, debounce: float = DEBOUNCE) -> float:
    """Start of the first run of ``mask`` lasting at least ``debounce`` seconds.

    Returns ``nan`` when no such run exists within the log.
    """
    t = np.asarray(t, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    start = None
    for k in range(len(t)):
        if not mask[k]:
            start = None
            continue
        if start is None:
            start = k
        if t[k] - t[start] >= debounce - 1e-9:
            return float(t[start])
    return math.nan


def thruster_on_time(log) -> np.ndarray:
    """Seconds each valve was open; the last row's command is never applied."""
    t = log.t
    if len(t) < 2:
        return np.zeros(N_THRUSTERS)
    dt = np.diff(t)
    return (log.valves[:-1].astype(float) * dt[:, None]).sum(axis=0)


def optimal_on_time(traj: Trajectory, nominal_thrust: float) -> np.ndarray:
    """Equivalent valve-open seconds of a planned thrust profile (per thruster)."""
    if traj.is_null:
        return np.zeros(N_THRUSTERS)
    f = traj.controls[:, 1:] / nominal_thrust
    dt = np.diff(traj.times)[:, None]
    return (0.5 * (f[1:] + f[:-1]) * dt).sum(axis=0)


def tracking_errors(log) -> tuple[np.ndarray, np.ndarray]:
    """Per-tick Euclidean and wrapped angular error of truth against the logged reference."""
    X, R = log.truth, log.reference
    return np.hypot(X[:, 0] - R[:, 0], X[:, 1] - R[:, 1]), np.abs(wrap_angle(X[:, 2] - R[:, 2]))


@dataclass
class EpisodeReport:
    success: bool
    time_to_success: float
    mean_euclidean_error: float
    mean_angular_error: float
    thruster_on_time: np.ndarray
    total_on_time: float
    max_excursion: float
    max_rotation: float
    band_position: float
    band_angle: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "success": bool(self.success),
            "time_to_success": float(self.time_to_success),
            "mean_euclidean_error": float(self.mean_euclidean_error),
            "mean_angular_error": float(self.mean_angular_error),
            "thruster_on_time": [float(v) for v in self.thruster_on_time],
            "total_on_time": float(self.total_on_time),
            "max_excursion": float(self.max_excursion),
            "max_rotation": float(self.max_rotation),
            "band_position": float(self.band_position),
            "band_angle": float(self.band_angle),
        }
        d.update(self.extra)
        return d


def evaluate(log, thresholds: SuccessThresholds = SuccessThresholds(),
             band_window: float = 60.0, origin=(0.0, 0.0, 0.0)) -> EpisodeReport:
    """Compute every report metric from the log.

    Success is judged on the true state relative to ``origin`` (x, y,
    theta). ``band_*`` are the largest position and heading deviations from
    ``origin`` over the final ``band_window`` seconds.
    """
    t = log.t
    X = log.truth.copy()
    X[:, 0] -= origin[0]
    X[:, 1] -= origin[1]
    X[:, 2] = wrap_angle(X[:, 2] - origin[2])
    tts = time_to_success(t, success_mask(X, thresholds), thresholds.debounce)
    e_lin, e_ang = tracking_errors(log)
    on = thruster_on_time(log)
    r = np.hypot(X[:, 0], X[:, 1])
    # unwrapped rotation from the start, so full turns are counted
    theta = np.unwrap(log.truth[:, 2])
    rot = np.abs(theta - theta[0])
    w = t >= t[-1] - band_window - 1e-9 if len(t) else t.astype(bool)
    return EpisodeReport(
        success=not math.isnan(tts),
        time_to_success=tts,
        mean_euclidean_error=float(e_lin.mean()) if len(t) else 0.0,
        mean_angular_error=float(e_ang.mean()) if len(t) else 0.0,
        thruster_on_time=on,
        total_on_time=float(on.sum()),
        max_excursion=float(r.max()) if len(t) else 0.0,
        max_rotation=float(rot.max()) if len(t) else 0.0,
        band_position=float(r[w].max()) if np.any(w) else 0.0,
        band_angle=float(np.abs(X[w, 2]).max()) if np.any(w) else 0.0,
    )
