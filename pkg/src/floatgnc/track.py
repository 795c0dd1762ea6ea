"""Time-varying LQR trajectory follower.

The cost-to-go ``S(t)`` is integrated backward from ``S(t_f) = Q_final``
along the linearisation of the platform dynamics about a reference
trajectory, sampled on a uniform 100 Hz grid. Gains ``K = R^-1 B^T S`` are
held constant between grid points. After the reference ends the follower
regulates about the final state with an infinite-horizon LQR gain.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .model import NU, NX, PlatformParams, jacobians, wrap_angle
from .plan.trajectory import Trajectory

GRID_HZ = 100.0
PSD_TOL = 1e-8
CACHE_TAG = "floatgnc-gains v1"


class RiccatiError(RuntimeError):
    """The backward Riccati integration lost positive semi-definiteness."""


def _diag(values, n, name, strict):
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        if v.shape != (n, n) or np.any(v != np.diag(np.diag(v))):
            raise ValueError(f"{name} must be a diagonal {n}x{n} matrix")
        v = np.diag(v)
    v = v.reshape(-1)
    if v.shape != (n,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} needs {n} finite diagonal entries")
    if strict and np.any(v <= 0):
        raise ValueError(f"{name} must be positive definite")
    if np.any(v < 0):
        raise ValueError(f"{name} must be positive semi-definite")
    return v


@dataclass(frozen=True)
class TvlqrWeights:
    """Diagonal TVLQR weights (stored as their diagonals).

    ``R_final`` weights the regulator that takes over once the reference
    has ended; ``regulation`` selects which pair, ``"running"`` (Q, R) or
    ``"final"`` (Q_final, R_final), defines that regulator.
    """

    Q: np.ndarray
    R: np.ndarray
    Q_final: np.ndarray
    R_final: np.ndarray | None = None
    regulation: str = "running"

    def __post_init__(self):
        object.__setattr__(self, "Q", _diag(self.Q, NX, "Q", False))
        object.__setattr__(self, "R", _diag(self.R, NU, "R", True))
        object.__setattr__(self, "Q_final", _diag(self.Q_final, NX, "Q_final", False))
        rf = self.R if self.R_final is None else self.R_final
        object.__setattr__(self, "R_final", _diag(rf, NU, "R_final", True))
        if self.regulation not in ("running", "final"):
            raise ValueError("regulation must be 'running' or 'final'")

    @classmethod
    def preset(cls, name: str = "simulation") -> TvlqrWeights:
        if name == "simulation":
            return cls(
                Q=[1e4, 1e4, 1e4, 100, 100, 100, 1e-3],
                R=np.full(NU, 10.0),
                Q_final=[1e5, 1e5, 1e5, 1e6, 1e6, 1e6, 1e-7],
                R_final=np.ones(NU),
            )
        if name == "real-system":
            q = [5e3, 5e3, 5e2, 5e2, 5e2, 2e3, 1e-3]
            r = np.r_[1.0, np.full(NU - 1, 200.0)]
            return cls(Q=q, R=r, Q_final=q, R_final=r)
        raise ValueError(f"unknown weight preset {name!r}")

    def scaled(self, factor: float) -> TvlqrWeights:
        return TvlqrWeights(self.Q * factor, self.R * factor, self.Q_final * factor,
                            self.R_final * factor, self.regulation)

    def regulator_pair(self):
        if self.regulation == "final":
            return self.Q_final, self.R_final
        return self.Q, self.R

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "R": self.R.tolist(), "Q_final": self.Q_final.tolist(),
                "R_final": self.R_final.tolist(), "regulation": self.regulation}

    @classmethod
    def from_dict(cls, data: dict) -> TvlqrWeights:
        allowed = {"Q", "R", "Q_final", "R_final", "regulation"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown TVLQR weight keys: {sorted(unknown)}")
        return cls(**data)


def lqr_gain(A, B, Q, R):
    """Infinite-horizon continuous LQR gain and ARE solution."""
    Qm = np.diag(Q) if np.ndim(Q) == 1 else np.asarray(Q)
    Rm = np.diag(R) if np.ndim(R) == 1 else np.asarray(R)
    S = scipy.linalg.solve_continuous_are(A, B, Qm, Rm)
    S = 0.5 * (S + S.T)
    return np.linalg.solve(Rm, B.T @ S), S


def regulation_reference(state) -> tuple[np.ndarray, np.ndarray]:
    """Rest state and zero feedforward used once the reference has ended."""
    x = np.asarray(state, dtype=float).copy()
    x[3:6] = 0.0
    return x, np.zeros(NU)


@dataclass(frozen=True)
class GainSchedule:
    """Gains and reference on a uniform grid, plus the terminal regulator."""

    times: np.ndarray
    K: np.ndarray        # (n, 9, 7)
    S: np.ndarray        # (n, 7, 7)
    x_ref: np.ndarray    # (n, 7)
    u_ref: np.ndarray    # (n, 9)
    K_reg: np.ndarray    # (9, 7)
    x_reg: np.ndarray    # (7,)
    u_reg: np.ndarray    # (9,)
    grid_hz: float = GRID_HZ
    key: str = ""

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def index(self, t: float) -> int:
        """Grid index of the zero-order hold active at time ``t``."""
        if t <= 0.0:
            return 0
        k = int(np.floor(t * self.grid_hz + 1e-9))
        return min(k, len(self.times) - 1)

    def in_regulation(self, t: float) -> bool:
        return t > self.final_time + 0.5 / self.grid_hz

    def gain(self, t: float):
        if self.in_regulation(t):
            return self.K_reg
        return self.K[self.index(t)]

    def to_text(self) -> str:
        n = len(self.times)
        iu = np.triu_indices(NX)
        rows = np.column_stack([
            self.times, self.x_ref, self.u_ref, self.K.reshape(n, -1), self.S[:, iu[0], iu[1]],
        ])
        reg = np.r_[np.nan, self.x_reg, self.u_reg, self.K_reg.ravel(), np.full(len(iu[0]), np.nan)]
        buf = io.StringIO()
        buf.write(f"# {CACHE_TAG} key={self.key} grid_hz={self.grid_hz!r} rows={n}\n")
        buf.write("# columns: t, x_ref[7], u_ref[9], K[9x7 row-major], S upper triangle[28]; "
                  "last row: regulator (t=nan)\n")
        np.savetxt(buf, np.vstack([rows, reg]), fmt="%.17g", delimiter=",")
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> GainSchedule:
        lines = text.splitlines()
        if not lines or not lines[0].startswith(f"# {CACHE_TAG}"):
            raise ValueError("not a gain schedule file")
        meta = dict(tok.split("=", 1) for tok in lines[0][2:].split()[2:])
        data = np.loadtxt(io.StringIO("\n".join(ln for ln in lines if not ln.startswith("#"))),
                          delimiter=",", ndmin=2)
        iu = np.triu_indices(NX)
        n_expected = 1 + NX + NU + NU * NX + len(iu[0])
        if data.shape[1] != n_expected or len(data) < 2:
            raise ValueError("malformed gain schedule file")
        body, reg = data[:-1], data[-1]
        n = len(body)
        c = 1
        x_ref = body[:, c:c + NX]; c += NX
        u_ref = body[:, c:c + NU]; c += NU
        K = body[:, c:c + NU * NX].reshape(n, NU, NX); c += NU * NX
        S = np.zeros((n, NX, NX))
        S[:, iu[0], iu[1]] = body[:, c:]
        S = S + np.triu(S, 1).transpose(0, 2, 1)
        return cls(
            times=body[:, 0], K=K, S=S, x_ref=x_ref, u_ref=u_ref,
            K_reg=reg[1 + NX + NU:1 + NX + NU + NU * NX].reshape(NU, NX),
            x_reg=reg[1:1 + NX], u_reg=reg[1 + NX:1 + NX + NU],
            grid_hz=float(meta.get("grid_hz", GRID_HZ)), key=meta.get("key", ""),
        )

    @classmethod
    def load(cls, path) -> GainSchedule:
        return cls.from_text(Path(path).read_text())


def schedule_key(traj: Trajectory, weights: TvlqrWeights, params: PlatformParams,
                 grid_hz: float, substeps) -> str:
    h = hashlib.sha256()
    h.update(traj.digest().encode())
    h.update(repr(sorted(weights.to_dict().items())).encode())
    h.update(repr(sorted(params.to_dict().items())).encode())
    h.update(repr((float(grid_hz), substeps)).encode())
    return h.hexdigest()[:32]


def _riccati_rhs(S, A, B, Q, Rinv):
    """Backward-time derivative ``dS/ds`` with ``s = t_f - t``."""
    SB = S @ B
    return A.T @ S + S @ A - SB @ (Rinv[:, None] * SB.T) + np.diag(Q)


def riccati_backward(traj: Trajectory, weights: TvlqrWeights, params: PlatformParams,
                     grid_hz: float = GRID_HZ, substeps: int | None = None,
                     refine: int = 1) -> GainSchedule:
    """Integrate the differential Riccati equation backward along ``traj``.

    Args:
        traj: Reference trajectory; a null trajectory yields a pure regulator.
        weights: TVLQR weights.
        params: Platform parameters used for the linearisation.
        grid_hz: Storage (and zero-order-hold) rate of the schedule.
        substeps: RK4 steps per grid interval. ``None`` picks enough steps
            to keep twice the step times the closed-loop spectral radius
            below 0.25 (and never fewer than two steps per interval); the
            radius matters just after the stiff terminal condition.
        refine: Multiplier on the automatic step count (convergence checks).

    Raises:
        RiccatiError: if ``S`` acquires an eigenvalue below ``-1e-8``.
    """
    x_term, u_term = regulation_reference(traj.states[-1])
    A_reg, B_reg = jacobians(x_term, u_term, params)
    K_reg, _ = lqr_gain(A_reg, B_reg, *weights.regulator_pair())
    key = schedule_key(traj, weights, params, grid_hz, (substeps, int(refine)))

    tf = traj.final_time
    n_int = int(np.ceil(tf * grid_hz - 1e-9))
    times = np.arange(n_int + 1) / grid_hz
    times[-1] = min(times[-1], tf) if n_int else 0.0
    refs = [traj.sample(traj.times[0] + t, params) for t in times]
    x_ref = np.array([r[0] for r in refs])
    u_ref = np.array([r[1] for r in refs])
    Rinv = 1.0 / weights.R
    Q = weights.Q

    S_all = np.empty((n_int + 1, NX, NX))
    S = np.diag(weights.Q_final).astype(float)
    if np.linalg.eigvalsh(S)[0] < -PSD_TOL:
        raise RiccatiError("terminal cost Q_final is not positive semi-definite")
    S_all[-1] = S

    memo = {}

    def lin(t):
        if t not in memo:
            x, u = traj.sample(traj.times[0] + t, params)
            memo[t] = jacobians(x, u, params)
        return memo[t]

    for i in range(n_int, 0, -1):
        t_hi, t_lo = times[i], times[i - 1]
        H = t_hi - t_lo
        if substeps is None:
            A, B = lin(t_hi)
            radius = np.max(np.abs(np.linalg.eigvals(A - B @ (Rinv[:, None] * B.T) @ S)))
            m = max(2, int(np.ceil(H * 2.0 * radius / 0.25))) * int(refine)
        else:
            m = int(substeps)
        h = H / m
        for j in range(m):
            t = t_hi - j * h
            A1, B1 = lin(t)
            A2, B2 = lin(t - 0.5 * h)
            A3, B3 = lin(t - h)
            k1 = _riccati_rhs(S, A1, B1, Q, Rinv)
            k2 = _riccati_rhs(S + 0.5 * h * k1, A2, B2, Q, Rinv)
            k3 = _riccati_rhs(S + 0.5 * h * k2, A2, B2, Q, Rinv)
            k4 = _riccati_rhs(S + h * k3, A3, B3, Q, Rinv)
            S = S + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            S = 0.5 * (S + S.T)
        if not np.all(np.isfinite(S)):
            raise RiccatiError(f"S diverged at t={t_lo:.3f} s")
        eig_min = float(np.linalg.eigvalsh(S)[0])
        if eig_min < -PSD_TOL:
            raise RiccatiError(f"S lost positive semi-definiteness at t={t_lo:.3f} s "
                               f"(min eigenvalue {eig_min:.3e})")
        S_all[i - 1] = S
        if len(memo) > 4096:
            memo.clear()

    Bs = np.array([jacobians(x, u, params)[1] for x, u in zip(x_ref, u_ref)])
    K = Rinv[None, :, None] * np.einsum("nij,njk->nik", Bs.transpose(0, 2, 1), S_all)
    return GainSchedule(times=times, K=K, S=S_all, x_ref=x_ref, u_ref=u_ref,
                        K_reg=K_reg, x_reg=x_term, u_reg=u_term, grid_hz=grid_hz, key=key)


def state_error(x_est, x_ref) -> np.ndarray:
    """``x_est - x_ref`` with the heading difference wrapped to (-pi, pi]."""
    e = np.asarray(x_est, dtype=float) - x_ref
    e[2] = wrap_angle(e[2])
    return e


def feedback(schedule: GainSchedule, t: float, x_est) -> np.ndarray:
    """Continuous control ``u = u_0 - K (x - x_0)`` before modulation."""
    if schedule.in_regulation(t):
        x0, u0, K = schedule.x_reg, schedule.u_reg, schedule.K_reg
    else:
        k = schedule.index(t)
        x0, u0, K = schedule.x_ref[k], schedule.u_ref[k], schedule.K[k]
    return u0 - K @ state_error(x_est, x0)


def build_schedule(traj: Trajectory, weights: TvlqrWeights, params: PlatformParams,
                   cache_dir=None, grid_hz: float = GRID_HZ) -> GainSchedule:
    """``riccati_backward`` with an optional on-disk cache keyed by trajectory hash."""
    if cache_dir is None:
        return riccati_backward(traj, weights, params, grid_hz)
    key = schedule_key(traj, weights, params, grid_hz, (None, 1))
    path = Path(cache_dir) / f"gains-{key}.txt"
    if path.exists():
        sched = GainSchedule.load(path)
        if sched.key == key:
            return sched
    sched = riccati_backward(traj, weights, params, grid_hz)
    path.parent.mkdir(parents=True, exist_ok=True)
    sched.save(path)
    return sched
