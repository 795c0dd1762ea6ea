"""State observer: linear Kalman filter for translation and wheel speed, and a
tangent-space Kalman filter on SO(2) x R for heading and yaw rate.

The covariance is block diagonal. The linear block covers
``(x, y, xdot, ydot, omega_rw)``; the rotational block covers
``(theta, thetadot)``. Heading is kept continuous (unwrapped) inside the
filter; the innovation is the wrapped difference between measured and
estimated heading, so measurements crossing the +-pi seam cause no jumps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NX, PlatformParams, dynamics, wrap_angle

LIN = np.array([0, 1, 3, 4, 6])   # linear-block state indices
ROT = np.array([2, 5])            # rotational-block state indices
GATE_SIGMA = 5.0


def _diag7(v, name):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (NX,) or not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError(f"{name} needs 7 non-negative finite entries")
    return a


@dataclass(frozen=True)
class KfConfig:
    """Observer noise settings (diagonals).

    ``R`` has seven entries: variances of the x, y and theta measurements,
    three velocity pseudo-measurement variances (velocities are not
    measured, so these are unused), and the wheel-speed variance.
    """

    Q: np.ndarray = field(default_factory=lambda: np.array([0.1] * 6 + [1.0]))
    R: np.ndarray = field(default_factory=lambda: np.array([1e-3, 1e-3, 1e-3, 5e3, 5e3, 5e3, 1.0]))
    P0: np.ndarray = field(default_factory=lambda: np.array([1e-2, 1e-2, 1e-2, 1e-1, 1e-1, 1e-1, 1e-2]))
    gate_sigma: float = GATE_SIGMA

    def __post_init__(self):
        object.__setattr__(self, "Q", _diag7(self.Q, "Q"))
        object.__setattr__(self, "R", _diag7(self.R, "R"))
        object.__setattr__(self, "P0", _diag7(self.P0, "P0"))
        if np.any(self.R[[0, 1, 2, 6]] <= 0) or np.any(self.P0 <= 0):
            raise ValueError("measurement variances and P0 must be positive")
        if not self.gate_sigma > 0:
            raise ValueError("gate_sigma must be positive")

    @property
    def r_linear(self) -> np.ndarray:
        """Variances of (x, y, omega_rw)."""
        return self.R[[0, 1, 6]]

    @property
    def r_theta(self) -> float:
        return float(self.R[2])

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "R": self.R.tolist(), "P0": self.P0.tolist(),
                "gate_sigma": self.gate_sigma}

    @classmethod
    def from_dict(cls, data: dict) -> KfConfig:
        unknown = set(data) - {"Q", "R", "P0", "gate_sigma"}
        if unknown:
            raise ValueError(f"unknown observer keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Measurement:
    """Pose and wheel-speed sample; ``valid`` flags (x, y, theta, omega_rw)."""

    x: float
    y: float
    theta: float
    omega_rw: float
    valid: tuple = (True, True, True, True)

    def __post_init__(self):
        if len(self.valid) != 4:
            raise ValueError("valid needs four flags")
        object.__setattr__(self, "valid", tuple(bool(v) for v in self.valid))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.omega_rw], dtype=float)


@dataclass(frozen=True)
class Estimate:
    """Filter mean (heading unwrapped) and block-diagonal covariance."""

    mean: np.ndarray
    P_lin: np.ndarray
    P_rot: np.ndarray

    @property
    def covariance(self) -> np.ndarray:
        P = np.zeros((NX, NX))
        P[np.ix_(LIN, LIN)] = self.P_lin
        P[np.ix_(ROT, ROT)] = self.P_rot
        return P

    @property
    def state(self) -> np.ndarray:
        """Mean with heading wrapped to (-pi, pi]."""
        x = self.mean.copy()
        x[2] = wrap_angle(x[2])
        return x


@dataclass(frozen=True)
class UpdateInfo:
    """Innovations (x, y, theta, omega_rw) and which channels were applied."""

    innovation: np.ndarray
    accepted: tuple
    gated: tuple


def initial_estimate(meas: Measurement, config: KfConfig = KfConfig()) -> Estimate:
    """Pose and wheel speed from the first sample, zero velocities."""
    x = np.zeros(NX)
    x[[0, 1, 2, 6]] = meas.vector
    P = config.P0
    return Estimate(x, np.diag(P[LIN]), np.diag(P[ROT]))


def _transition(dt):
    F_lin = np.eye(5)
    F_lin[0, 2] = F_lin[1, 3] = dt
    F_rot = np.array([[1.0, dt], [0.0, 1.0]])
    return F_lin, F_rot


def kf_predict(est: Estimate, u_applied, dt: float, params: PlatformParams,
               config: KfConfig = KfConfig()) -> Estimate:
    """Propagate through the dynamics with the applied control.

    The acceleration at the current mean is held over the step (exact for
    the constant-acceleration kinematics); covariance ``P <- F P F^T + Q dt``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    m = est.mean
    acc = dynamics(m, u_applied, params)
    x = m.copy()
    x[0:3] = m[0:3] + m[3:6] * dt + 0.5 * acc[3:6] * dt * dt
    x[3:6] = m[3:6] + acc[3:6] * dt
    x[6] = m[6] + acc[6] * dt
    F_lin, F_rot = _transition(dt)
    Q = config.Q
    P_lin = F_lin @ est.P_lin @ F_lin.T + np.diag(Q[LIN]) * dt
    P_rot = F_rot @ est.P_rot @ F_rot.T + np.diag(Q[ROT]) * dt
    return Estimate(x, 0.5 * (P_lin + P_lin.T), 0.5 * (P_rot + P_rot.T))


def _joseph(P, H, K, R):
    I_KH = np.eye(len(P)) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return 0.5 * (P + P.T)


def _gated_update(mean, P, H, nu, r, gate):
    """Sequential scalar updates with per-channel innovation gating."""
    accepted = []
    for k in range(len(nu)):
        h = H[k]
        s = float(h @ P @ h) + r[k]
        innov = float(nu[k] - h @ mean)
        if innov * innov > gate * gate * s:
            accepted.append(False)
            continue
        K = P @ h / s
        mean = mean + K * innov
        P = _joseph(P, h[None, :], K[:, None], np.array([[r[k]]]))
        accepted.append(True)
    return mean, P, accepted


def kf_update_linear(est: Estimate, meas: Measurement, config: KfConfig = KfConfig()):
    """Kalman update of the linear block from x, y and omega_rw.

    Returns:
        ``(Estimate, accepted)`` where ``accepted`` flags the (x, y, omega_rw)
        channels that passed validity and the gate.
    """
    z = meas.vector[[0, 1, 3]]
    valid = np.array(meas.valid)[[0, 1, 3]]
    H_full = np.zeros((3, 5))
    H_full[0, 0] = H_full[1, 1] = H_full[2, 4] = 1.0
    r_full = config.r_linear
    lin_mean = est.mean[LIN]
    accepted = [False, False, False]
    idx = np.nonzero(valid)[0]
    if idx.size == 0:
        return est, tuple(accepted)
    # innovations are taken relative to the prior, one channel at a time
    new_mean, P, acc = _gated_update(lin_mean, est.P_lin, H_full[idx], z[idx], r_full[idx],
                                     config.gate_sigma)
    for k, a in zip(idx, acc):
        accepted[k] = a
    mean = est.mean.copy()
    mean[LIN] = new_mean
    return Estimate(mean, P, est.P_rot), tuple(accepted)


def lie_kf_update(est: Estimate, theta_meas: float, config: KfConfig = KfConfig(),
                  valid: bool = True):
    """Heading update in the tangent space of SO(2).

    The innovation is ``log(R(theta_meas) R(theta_est)^-1)``, i.e. the
    difference wrapped to (-pi, pi].

    Returns:
        ``(Estimate, innovation, accepted)``.
    """
    nu = float(wrap_angle(theta_meas - est.mean[2]))
    if not valid:
        return est, nu, False
    P = est.P_rot
    s = P[0, 0] + config.r_theta
    if nu * nu > config.gate_sigma**2 * s:
        return est, nu, False
    K = P[:, 0] / s
    mean = est.mean.copy()
    mean[2] += K[0] * nu
    mean[5] += K[1] * nu
    H = np.array([[1.0, 0.0]])
    P = _joseph(P, H, K[:, None], np.array([[config.r_theta]]))
    return Estimate(mean, est.P_lin, P), nu, True


def kf_update(est: Estimate, meas: Measurement, config: KfConfig = KfConfig()):
    """Both block updates; returns ``(Estimate, UpdateInfo)``."""
    innov = np.array([
        meas.x - est.mean[0], meas.y - est.mean[1],
        wrap_angle(meas.theta - est.mean[2]), meas.omega_rw - est.mean[6],
    ])
    est, acc_lin = kf_update_linear(est, meas, config)
    est, _, acc_th = lie_kf_update(est, meas.theta, config, valid=meas.valid[2])
    accepted = (acc_lin[0], acc_lin[1], acc_th, acc_lin[2])
    gated = tuple(v and not a for v, a in zip(meas.valid, accepted))
    return est, UpdateInfo(innov, accepted, gated)


class Observer:
    """Sequential filter wrapper holding the current estimate."""

    def __init__(self, params: PlatformParams, config: KfConfig = KfConfig()):
        self.params = params
        self.config = config
        self.estimate: Estimate | None = None
        self.last_info: UpdateInfo | None = None

    def step(self, meas: Measurement, u_applied, dt: float) -> Estimate:
        """Predict over ``dt`` with the control applied since the last call, then update.

        The first call initialises from the measurement instead.
        """
        if self.estimate is None:
            self.estimate = initial_estimate(meas, self.config)
            self.last_info = UpdateInfo(np.zeros(4), tuple(meas.valid), (False,) * 4)
            return self.estimate
        est = kf_predict(self.estimate, u_applied, dt, self.params, self.config)
        est, self.last_info = kf_update(est, meas, self.config)
        self.estimate = est
        return est
