"""Sigma-delta modulation of continuous thrust demands into valve pulses.

Each channel integrates its demand over a modulator period. When the
integral reaches one pulse worth of impulse, ``eps = f_nom / f_smpl``, the
valve opens for the whole next period and ``eps`` is taken off the
integrator. Pulses therefore always last exactly one period.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ANTAGONISTIC_PAIRS, N_THRUSTERS


def net_antagonistic(forces) -> np.ndarray:
    """Cancel opposing demand within each antagonistic thruster pair.

    The two thrusters of a pair produce exactly opposite wrenches, so
    replacing ``(a, b)`` by ``(max(a - b, 0), max(b - a, 0))`` leaves the net
    wrench unchanged while removing negative or wasted demand.
    """
    f = np.array(forces, dtype=float)
    out = f.copy()
    for i, j in ANTAGONISTIC_PAIRS:
        d = f[..., i] - f[..., j]
        out[..., i] = np.maximum(d, 0.0)
        out[..., j] = np.maximum(-d, 0.0)
    return out


def allocate(forces, nominal_thrust: float, net_pairs: bool = True) -> np.ndarray:
    """Map a continuous thruster demand onto the admissible interval [0, f_nom]."""
    f = net_antagonistic(forces) if net_pairs else np.asarray(forces, dtype=float)
    return np.clip(f, 0.0, nominal_thrust)


@dataclass
class SigmaDeltaModulator:
    """Eight-channel sigma-delta modulator.

    Attributes:
        nominal_thrust: Force of an open valve, N.
        sample_hz: Modulator rate; one pulse lasts ``1 / sample_hz`` s.
        integrator: Per-channel error integral, N*s. Never negative.
        valves: Valve state latched for the current period.
    """

    nominal_thrust: float = 10.0
    sample_hz: float = 10.0
    n_channels: int = N_THRUSTERS
    integrator: np.ndarray = field(default=None)
    valves: np.ndarray = field(default=None)

    def __post_init__(self):
        if not (self.nominal_thrust > 0 and self.sample_hz > 0):
            raise ValueError("nominal_thrust and sample_hz must be positive")
        if self.integrator is None:
            self.integrator = np.zeros(self.n_channels)
        if self.valves is None:
            self.valves = np.zeros(self.n_channels, dtype=bool)

    @property
    def threshold(self) -> float:
        return self.nominal_thrust / self.sample_hz

    @property
    def period(self) -> float:
        return 1.0 / self.sample_hz

    def reset(self) -> None:
        self.integrator[:] = 0.0
        self.valves[:] = False

    def step(self, demand) -> np.ndarray:
        """Advance one period and return the valve command for it.

        Raises:
            ValueError: if any demand lies outside ``[0, nominal_thrust]``;
                use ``allocate`` first.
        """
        u = np.asarray(demand, dtype=float)
        if u.shape != (self.n_channels,):
            raise ValueError(f"expected {self.n_channels} thruster demands")
        if not np.all(np.isfinite(u)) or np.any(u < 0.0) or np.any(u > self.nominal_thrust):
            raise ValueError("thruster demand outside [0, nominal_thrust]; clamp before modulating")
        w = self.integrator + u * self.period
        fire = w >= self.threshold * (1.0 - 1e-12)
        w = np.where(fire, w - self.threshold, w)
        self.integrator = np.maximum(w, 0.0)
        self.valves = fire
        return fire.copy()


def modulate_sequence(demands, nominal_thrust: float = 10.0, sample_hz: float = 10.0) -> np.ndarray:
    """Modulate a ``(steps, channels)`` demand history; returns the valve history."""
    d = np.asarray(demands, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    mod = SigmaDeltaModulator(nominal_thrust, sample_hz, n_channels=d.shape[1])
    return np.array([mod.step(row) for row in d], dtype=bool).reshape(d.shape)
