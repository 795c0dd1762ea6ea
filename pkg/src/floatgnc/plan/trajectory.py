"""Knot-point trajectories and their columnar text format.

File layout: one ``#``-prefixed metadata line, a header row, then one row per
knot with ``t``, the 7 state columns and the 9 control columns, comma
separated. Floats use 17 significant digits so a write/read cycle is exact.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..model import CONTROL_NAMES, NU, NX, STATE_NAMES, dynamics

HEADER = ("t",) + STATE_NAMES + CONTROL_NAMES
FORMAT_TAG = "floatgnc-trajectory v1"


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float).reshape(-1, NX)
        u = np.asarray(self.controls, dtype=float).reshape(-1, NU)
        if not (len(t) == len(x) == len(u)) or len(t) == 0:
            raise ValueError("times, states and controls must have the same non-zero length")
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("knot times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "controls", u)

    @property
    def n_knots(self) -> int:
        return len(self.times)

    @property
    def final_time(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def is_null(self) -> bool:
        return self.n_knots == 1

    @property
    def knot_spacing(self) -> float:
        return 0.0 if self.is_null else self.final_time / (self.n_knots - 1)

    @classmethod
    def null(cls, state) -> Trajectory:
        """Zero-duration trajectory that just holds ``state``."""
        return cls(np.zeros(1), np.asarray(state, dtype=float)[None, :], np.zeros((1, NU)))

    def state_derivatives(self, params) -> np.ndarray:
        return dynamics(self.states, self.controls, params)

    def sample(self, t, params):
        """Reference state and control at time ``t``.

        States use the cubic Hermite interpolant implied by the collocation
        scheme; controls are linear between knots. Outside the horizon the
        end knots are held.
        """
        if self.is_null:
            return self.states[0].copy(), self.controls[0].copy()
        t0, tf = self.times[0], self.times[-1]
        if t <= t0:
            return self.states[0].copy(), self.controls[0].copy()
        if t >= tf:
            return self.states[-1].copy(), self.controls[-1].copy()
        h = self.knot_spacing
        k = min(int((t - t0) / h), self.n_knots - 2)
        s = (t - self.times[k]) / h
        x0, x1 = self.states[k], self.states[k + 1]
        f = dynamics(self.states[k : k + 2], self.controls[k : k + 2], params)
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        x = h00 * x0 + h10 * h * f[0] + h01 * x1 + h11 * h * f[1]
        u = (1 - s) * self.controls[k] + s * self.controls[k + 1]
        return x, u

    def to_text(self) -> str:
        buf = io.StringIO()
        data = np.column_stack([self.times, self.states, self.controls])
        buf.write(f"# {FORMAT_TAG} knots={self.n_knots}\n")
        buf.write(",".join(HEADER) + "\n")
        np.savetxt(buf, data, fmt="%.17g", delimiter=",")
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> Trajectory:
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines:
            raise ValueError("empty trajectory file")
        header = tuple(c.strip() for c in lines[0].split(","))
        if header != HEADER:
            raise ValueError(f"unexpected trajectory header: {header}")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float)
        if data.size == 0:
            raise ValueError("trajectory file has no knots")
        data = data.reshape(-1, len(HEADER))
        return cls(data[:, 0], data[:, 1 : 1 + NX], data[:, 1 + NX :])

    @classmethod
    def load(cls, path) -> Trajectory:
        return cls.from_text(Path(path).read_text())
