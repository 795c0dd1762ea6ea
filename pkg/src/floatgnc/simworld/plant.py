"""Truth plant stepping, sensor model and disturbance events."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..estimate import Measurement
from ..model import N_THRUSTERS, NX, PlatformParams, wrap_angle
from .heightmap import Heightmap


@dataclass(frozen=True)
class DisturbanceEvent:
    """World-frame force and torque applied over ``[start, start + duration)``."""

    start: float
    duration: float
    force: tuple = (0.0, 0.0)
    torque: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("disturbance duration must be positive")
        if not self.start >= 0:
            raise ValueError("disturbance start must be non-negative")
        f = tuple(float(v) for v in self.force)
        if len(f) != 2:
            raise ValueError("disturbance force needs two components")
        object.__setattr__(self, "force", f)

    @classmethod
    def impulse_default(cls, start: float = 1.0) -> DisturbanceEvent:
        """The 1 ms kick of 5000 N per axis and 1000 N*m used for stabilization studies."""
        return cls(start, 0.001, (5000.0, 5000.0), 1000.0)

    def to_dict(self) -> dict:
        return {"start": self.start, "duration": self.duration, "force": list(self.force),
                "torque": self.torque}

    @classmethod
    def from_dict(cls, d: dict) -> DisturbanceEvent:
        return cls(float(d["start"]), float(d["duration"]), tuple(d.get("force", (0.0, 0.0))),
                   float(d.get("torque", 0.0)))


def step_plant(state, valves, tau, extra_wrench, heightmap: Heightmap, params: PlatformParams,
               dt: float = 0.001, n: int = 1, backend=None):
    """Advance the truth state by ``n`` RK4 steps of ``dt``.

    Open valves push with the nominal force. The wheel torque is limited to
    ``+-tau_max`` and cut in the direction that would exceed ``omega_max``.

    Returns:
        ``(new_state, tau_applied, off_map)``.
    """
    x = np.array(state, dtype=float)
    if x.shape != (NX,):
        raise ValueError("state must have 7 entries")
    v = np.asarray(valves, dtype=bool)
    if v.shape != (N_THRUSTERS,):
        raise ValueError("valves must have 8 entries")
    thrust = v.astype(float) * params.nominal_thrust
    tau_applied, off_map = kernels.plant_substeps(
        x, thrust, tau, np.asarray(extra_wrench, dtype=float), heightmap,
        kernels.kernel_params(params), dt, n, backend=backend)
    return x, float(tau_applied), bool(off_map)


@dataclass(frozen=True)
class NoiseConfig:
    """Measurement noise variances of x, y (m^2), theta (rad^2) and omega_rw ((rad/s)^2)."""

    var_x: float = 1e-5
    var_y: float = 1e-5
    var_theta: float = 1e-5
    var_omega: float = 1e-4

    def __post_init__(self):
        for k in ("var_x", "var_y", "var_theta", "var_omega"):
            if not getattr(self, k) >= 0:
                raise ValueError(f"{k} must be non-negative")

    @property
    def std(self) -> np.ndarray:
        return np.sqrt([self.var_x, self.var_y, self.var_theta, self.var_omega])

    @classmethod
    def none(cls) -> NoiseConfig:
        return cls(0.0, 0.0, 0.0, 0.0)


def measure(truth, noise: NoiseConfig, rng: np.random.Generator) -> Measurement:
    """Noisy pose and wheel speed; heading wrapped to (-pi, pi].

    Four normal variates are drawn per call whatever the variances, so the
    random stream does not depend on the noise settings.
    """
    t = np.asarray(truth, dtype=float)
    z = rng.standard_normal(4) * noise.std
    return Measurement(float(t[0] + z[0]), float(t[1] + z[1]),
                       float(wrap_angle(t[2] + z[2])), float(t[6] + z[3]))
