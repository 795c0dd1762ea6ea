"""Rigid-body model of the planar floating platform.

State ordering is ``[x, y, theta, xdot, ydot, thetadot, omega_rw]`` and
control ordering is ``[tau, f0, ..., f7]`` where ``tau`` is the torque the
motor applies to the reaction wheel and ``f_i`` are thruster forces.

All functions broadcast over leading axes, so ``state`` may be ``(7,)`` or
``(N, 7)`` (with ``control`` ``(9,)`` or ``(N, 9)``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

NX = 7
NU = 9
N_THRUSTERS = 8

# Body-frame unit force and torque sign of each thruster f0..f7.
THRUSTER_FX = np.array([0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0, -1.0])
THRUSTER_FY = np.array([1.0, -1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0])
THRUSTER_TORQUE = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0])

# Thruster pairs whose wrenches are exact negatives of each other.
ANTAGONISTIC_PAIRS = ((0, 1), (2, 3), (4, 5), (6, 7))
# Thruster pairs that push the same way with opposite torques.
PARALLEL_PAIRS = ((0, 5), (3, 6), (2, 7), (1, 4))

STATE_NAMES = ("x", "y", "theta", "xdot", "ydot", "thetadot", "omega_rw")
CONTROL_NAMES = ("tau",) + tuple(f"f{i}" for i in range(N_THRUSTERS))


@dataclass(frozen=True)
class PlatformParams:
    """Physical parameters of the platform (SI units)."""

    mass: float = 221.67
    body_inertia: float = 12.223
    wheel_inertia: float = 0.047
    thruster_arm: float = 0.35
    nominal_thrust: float = 10.0
    wheel_speed_max: float = 27.2
    wheel_torque_max: float = 0.2
    gravity: float = 9.81

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{f.name} must be finite and > 0, got {value!r}")
        if self.wheel_inertia >= self.body_inertia:
            raise ValueError("wheel_inertia must be smaller than body_inertia")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> PlatformParams:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown platform parameters: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite state or control")


def body_wrench(control, params: PlatformParams):
    """Net body-frame force and yaw moment produced by the thrusters alone.

    Returns:
        Tuple ``(fx_body, fy_body, mz)``; arrays if ``control`` is batched.
    """
    f = np.asarray(control, dtype=float)[..., 1:]
    fx = f @ THRUSTER_FX
    fy = f @ THRUSTER_FY
    mz = params.thruster_arm * (f @ THRUSTER_TORQUE)
    return fx, fy, mz


def dynamics(state, control, params: PlatformParams) -> np.ndarray:
    """Continuous-time state derivative of the platform."""
    x = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    _check_finite(x, u)
    theta = x[..., 2]
    s, c = np.sin(theta), np.cos(theta)
    fx, fy, mz = body_wrench(u, params)
    tau = u[..., 0]
    shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (NX,)
    dx = np.empty(shape)
    dx[..., 0:3] = x[..., 3:6]
    dx[..., 3] = (c * fx - s * fy) / params.mass
    dx[..., 4] = (s * fx + c * fy) / params.mass
    dx[..., 5] = (mz - tau) / params.body_inertia
    dx[..., 6] = tau / params.wheel_inertia
    return dx


def _control_matrix_columns(theta, params: PlatformParams):
    s, c = np.sin(theta), np.cos(theta)
    s = np.asarray(s)[..., None]
    c = np.asarray(c)[..., None]
    row_ax = (c * THRUSTER_FX - s * THRUSTER_FY) / params.mass
    row_ay = (s * THRUSTER_FX + c * THRUSTER_FY) / params.mass
    # derivative of the two acceleration rows with respect to theta
    drow_ax = (-s * THRUSTER_FX - c * THRUSTER_FY) / params.mass
    drow_ay = (c * THRUSTER_FX - s * THRUSTER_FY) / params.mass
    return row_ax, row_ay, drow_ax, drow_ay


def jacobians(state, control, params: PlatformParams):
    """Analytic Jacobians ``A = df/dx`` (7x7) and ``B = df/du`` (7x9)."""
    x = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    _check_finite(x, u)
    lead = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    theta = np.broadcast_to(x[..., 2], lead)
    f = np.broadcast_to(u[..., 1:], lead + (N_THRUSTERS,))
    row_ax, row_ay, drow_ax, drow_ay = _control_matrix_columns(theta, params)

    A = np.zeros(lead + (NX, NX))
    A[..., 0, 3] = A[..., 1, 4] = A[..., 2, 5] = 1.0
    A[..., 3, 2] = np.sum(drow_ax * f, axis=-1)
    A[..., 4, 2] = np.sum(drow_ay * f, axis=-1)

    B = np.zeros(lead + (NX, NU))
    B[..., 3, 1:] = row_ax
    B[..., 4, 1:] = row_ay
    B[..., 5, 0] = -1.0 / params.body_inertia
    B[..., 5, 1:] = params.thruster_arm * THRUSTER_TORQUE / params.body_inertia
    B[..., 6, 0] = 1.0 / params.wheel_inertia
    return A, B


def angular_momentum(state, params: PlatformParams):
    """Total yaw angular momentum of body plus wheel."""
    x = np.asarray(state, dtype=float)
    return params.body_inertia * x[..., 5] + params.wheel_inertia * x[..., 6]


def wrap_angle(angle):
    """Wrap to the half-open interval (-pi, pi]."""
    a = np.asarray(angle, dtype=float)
    w = np.remainder(a + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    # values already in range pass through untouched (no rounding)
    w = np.where((a > -np.pi) & (a <= np.pi), a, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


def validate_control(control, params: PlatformParams, atol: float = 1e-9) -> None:
    """Raise if a control vector leaves the relaxed actuator box."""
    u = np.asarray(control, dtype=float)
    _check_finite(u)
    if np.any(np.abs(u[..., 0]) > params.wheel_torque_max + atol):
        raise ValueError("wheel torque exceeds wheel_torque_max")
    f = u[..., 1:]
    if np.any(f < -atol) or np.any(f > params.nominal_thrust + atol):
        raise ValueError("thruster force outside [0, nominal_thrust]")
