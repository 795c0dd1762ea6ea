"""Hermite-Simpson transcription of the platform dynamics.

Decision vector layout: ``[X.ravel(), U.ravel(), (T)]`` with ``X`` of shape
``(N, 7)``, ``U`` of shape ``(N, 9)`` and the final time ``T`` present only
when it is free. The grid is uniform, ``h = T / (N - 1)``; a free final time
therefore acts as a scaling of the dynamics on a fixed normalised grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from ..model import (
    NU, NX, N_THRUSTERS, THRUSTER_FX, THRUSTER_FY, THRUSTER_TORQUE, PlatformParams,
    dynamics, jacobians,
)
from .nlp import Evaluation, NlpProblem

_EYE = np.eye(NX)


def hermite_simpson_defect(x_k, u_k, x_k1, u_k1, dt, params: PlatformParams):
    """Collocation defect across one interval (broadcasts over intervals)."""
    if np.any(np.asarray(dt) <= 0):
        raise ValueError("dt must be positive")
    f_k = dynamics(x_k, u_k, params)
    f_k1 = dynamics(x_k1, u_k1, params)
    x_m = 0.5 * (np.asarray(x_k) + x_k1) + dt / 8.0 * (f_k - f_k1)
    u_m = 0.5 * (np.asarray(u_k) + u_k1)
    f_m = dynamics(x_m, u_m, params)
    return np.asarray(x_k1) - x_k - dt / 6.0 * (f_k + 4.0 * f_m + f_k1)


def trajectory_defects(traj, params: PlatformParams) -> np.ndarray:
    """Defects of every interval of a trajectory, shape ``(N-1, 7)``."""
    if traj.is_null:
        return np.zeros((0, NX))
    x, u = traj.states, traj.controls
    return hermite_simpson_defect(x[:-1], u[:-1], x[1:], u[1:], traj.knot_spacing, params)


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary states and box bounds of a planning problem."""

    x_init: np.ndarray
    x_final: np.ndarray
    state_lower: np.ndarray
    state_upper: np.ndarray
    control_lower: np.ndarray
    control_upper: np.ndarray

    def __post_init__(self):
        for name, dim in (
            ("x_init", NX), ("x_final", NX), ("state_lower", NX),
            ("state_upper", NX), ("control_lower", NU), ("control_upper", NU),
        ):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (dim,):
                raise ValueError(f"{name} must have {dim} entries")
            object.__setattr__(self, name, v)

    def check(self, tol: float = 0.0) -> None:
        """Raise ``InfeasibleBoundsError`` when the box cannot be satisfied."""
        if np.any(self.state_lower > self.state_upper) or np.any(self.control_lower > self.control_upper):
            raise InfeasibleBoundsError("lower bound exceeds upper bound")
        for name in ("x_init", "x_final"):
            v = getattr(self, name)
            if np.any(v < self.state_lower - tol) or np.any(v > self.state_upper + tol):
                raise InfeasibleBoundsError(f"{name} lies outside the state bounds")

    def shifted(self, dx: float, dy: float) -> BoundarySpec:
        shift = np.zeros(NX)
        shift[:2] = dx, dy
        return BoundarySpec(
            self.x_init + shift, self.x_final + shift,
            self.state_lower + shift, self.state_upper + shift,
            self.control_lower, self.control_upper,
        )


class InfeasibleBoundsError(ValueError):
    pass


def default_boundary(x_init, x_final, params: PlatformParams, *, position_limit=10.0,
                     velocity_limit=0.5, rate_limit=0.5, angle_limit=4 * np.pi,
                     wheel_speed_fraction=1.0, wheel_torque_fraction=1.0) -> BoundarySpec:
    """Boundary spec with the default state and actuator boxes."""
    x_init = np.asarray(x_init, dtype=float)
    x_final = np.asarray(x_final, dtype=float)
    pos = max(position_limit, float(np.max(np.abs(np.r_[x_init[:2], x_final[:2]]))) + 1.0)
    w = wheel_speed_fraction * params.wheel_speed_max
    upper = np.array([pos, pos, angle_limit, velocity_limit, velocity_limit, rate_limit, w])
    t = wheel_torque_fraction * params.wheel_torque_max
    cu = np.r_[t, np.full(N_THRUSTERS, params.nominal_thrust)]
    cl = np.r_[-t, np.zeros(N_THRUSTERS)]
    return BoundarySpec(x_init, x_final, -upper, upper, cl, cu)


@dataclass(frozen=True)
class TimeOptimal:
    """Minimise the final time.

    ``regularization`` adds a small penalty on the mean normalised thrust
    (linear, since thrust is non-negative) so that thrusters which do not
    contribute sit at their lower bound instead of drifting in the
    objective's null space, e.g. as a firing antagonistic pair.
    """

    regularization: float = 1e-3


@dataclass(frozen=True)
class Fuel:
    """Minimise ``sum_k u_k^T R u_k`` with diagonal ``R``."""

    weights: np.ndarray = field(default_factory=lambda: np.r_[1e-2, np.ones(N_THRUSTERS)])

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape != (NU,) or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("fuel weights must be 9 positive diagonal entries")
        object.__setattr__(self, "weights", w)


def fuel_cost(controls, weights) -> float:
    u = np.asarray(controls, dtype=float)
    return float(np.sum(u * u * np.asarray(weights)))


def _thrust_curvature(theta, forces, v, params: PlatformParams):
    """Second derivatives of ``v . f(x, u)`` in ``theta`` and the thrusts.

    Returns ``(d2/dtheta2, d2/(dtheta df_i))``; every other second
    derivative of the dynamics vanishes.
    """
    s = np.sin(theta)
    c = np.cos(theta)
    from ..model import THRUSTER_FX, THRUSTER_FY

    fx = forces @ THRUSTER_FX
    fy = forces @ THRUSTER_FY
    m = params.mass
    ax = (c * fx - s * fy) / m
    ay = (s * fx + c * fy) / m
    a = -(v[:, 3] * ax + v[:, 4] * ay)
    b = (v[:, 3, None] * (-s[:, None] * THRUSTER_FX - c[:, None] * THRUSTER_FY)
         + v[:, 4, None] * (c[:, None] * THRUSTER_FX - s[:, None] * THRUSTER_FY)) / m
    return a, b


class Transcription:
    """Builds the collocation NLP for one boundary value problem."""

    def __init__(self, boundary: BoundarySpec, n_knots: int, params: PlatformParams,
                 objective, final_time: float | None = None):
        if n_knots < 2:
            raise ValueError("need at least two knots")
        boundary.check()
        if final_time is None and not isinstance(objective, TimeOptimal):
            raise ValueError("a free final time needs the time-optimal objective")
        if final_time is not None and final_time <= 0:
            raise ValueError("fixed final time must be positive")
        self.boundary = boundary
        self.N = n_knots
        self.params = params
        self.objective = objective
        self.final_time = final_time
        self.free_time = final_time is None
        self.nx_total = NX * n_knots
        self.nu_total = NU * n_knots
        self.n = self.nx_total + self.nu_total + (1 if self.free_time else 0)
        self.n_defects = NX * (n_knots - 1)
        self._jac_pattern = None

    # -- layout ---------------------------------------------------------
    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        X = z[: self.nx_total].reshape(self.N, NX)
        U = z[self.nx_total : self.nx_total + self.nu_total].reshape(self.N, NU)
        T = z[-1] if self.free_time else self.final_time
        return X, U, T

    def pack(self, X, U, T=None):
        parts = [np.ravel(X), np.ravel(U)]
        if self.free_time:
            parts.append([T])
        return np.concatenate(parts)

    def bounds(self):
        b = self.boundary
        lo = np.concatenate([np.tile(b.state_lower, self.N), np.tile(b.control_lower, self.N)])
        hi = np.concatenate([np.tile(b.state_upper, self.N), np.tile(b.control_upper, self.N)])
        if self.free_time:
            lo = np.r_[lo, 0.0]
            hi = np.r_[hi, np.inf]
        return lo, hi

    def band_order(self):
        """Knot-major variable order; the free final time goes last."""
        k = np.arange(self.N)[:, None]
        xi = k * NX + np.arange(NX)
        ui = self.nx_total + k * NU + np.arange(NU)
        order = np.concatenate([xi, ui], axis=1).ravel()
        if self.free_time:
            order = np.r_[order, self.n - 1]
        return order

    def boundary_pins(self):
        idx = np.r_[np.arange(NX), (self.N - 1) * NX + np.arange(NX)]
        val = np.r_[self.boundary.x_init, self.boundary.x_final]
        return idx, val

    def scales(self):
        p = self.params
        xs = np.array([1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 0.1 * p.wheel_speed_max])
        us = np.r_[p.wheel_torque_max, np.full(N_THRUSTERS, p.nominal_thrust)]
        x_scale = np.concatenate([np.tile(xs, self.N), np.tile(us, self.N)])
        if self.free_time:
            x_scale = np.r_[x_scale, 10.0]
        c_scale = np.tile(xs, self.N - 1) * 0.1
        return x_scale, c_scale

    # -- evaluation -----------------------------------------------------
    def _objective(self, X, U, T):
        grad_x = np.zeros((self.N, NX))
        grad_u = np.zeros((self.N, NU))
        grad_t = 0.0
        if isinstance(self.objective, TimeOptimal):
            reg = self.objective.regularization / self.params.nominal_thrust / self.N
            val = T + reg * float(np.sum(U[:, 1:]))
            grad_u[:, 1:] = reg
            grad_t = 1.0
        else:
            w = self.objective.weights
            val = float(np.sum(U * U * w))
            grad_u = 2.0 * U * w
        return val, grad_x, grad_u, grad_t

    def evaluate(self, z, with_jacobian: bool = False) -> Evaluation:
        X, U, T = self.unpack(z)
        p = self.params
        h = T / (self.N - 1)
        f = dynamics(X, U, p)
        A, B = jacobians(X, U, p)
        fk, fk1 = f[:-1], f[1:]
        x_m = 0.5 * (X[:-1] + X[1:]) + h / 8.0 * (fk - fk1)
        u_m = 0.5 * (U[:-1] + U[1:])
        f_m = dynamics(x_m, u_m, p)
        A_m, B_m = jacobians(x_m, u_m, p)
        quad = fk + 4.0 * f_m + fk1
        c = (X[1:] - X[:-1] - h / 6.0 * quad).ravel()

        val, gx, gu, gt = self._objective(X, U, T)
        free_time = self.free_time
        N = self.N

        def vjp(y):
            y = y.reshape(N - 1, NX)
            am_y = np.einsum("kji,kj->ki", A_m, y)
            Ak, Ak1 = A[:-1], A[1:]
            Bk, Bk1 = B[:-1], B[1:]
            gxk = -y - h / 6.0 * np.einsum("kji,kj->ki", Ak, y) - h / 3.0 * am_y \
                - h * h / 12.0 * np.einsum("kji,kj->ki", Ak, am_y)
            gxk1 = y - h / 6.0 * np.einsum("kji,kj->ki", Ak1, y) - h / 3.0 * am_y \
                + h * h / 12.0 * np.einsum("kji,kj->ki", Ak1, am_y)
            bm_y = np.einsum("kji,kj->ki", B_m, y)
            guk = -h / 6.0 * np.einsum("kji,kj->ki", Bk, y) - h * h / 12.0 * np.einsum("kji,kj->ki", Bk, am_y) \
                - h / 3.0 * bm_y
            guk1 = -h / 6.0 * np.einsum("kji,kj->ki", Bk1, y) + h * h / 12.0 * np.einsum("kji,kj->ki", Bk1, am_y) \
                - h / 3.0 * bm_y
            gX = np.zeros((N, NX))
            gU = np.zeros((N, NU))
            gX[:-1] += gxk
            gX[1:] += gxk1
            gU[:-1] += guk
            gU[1:] += guk1
            parts = [gX.ravel(), gU.ravel()]
            if free_time:
                dd_dh = -quad / 6.0 - h / 12.0 * np.einsum("kij,kj->ki", A_m, fk - fk1)
                parts.append([np.sum(dd_dh * y) / (N - 1)])
            return np.concatenate(parts)

        grad = self.pack(gx, gu, gt)
        cache = dict(h=h, A=A, B=B, A_m=A_m, B_m=B_m, quad=quad, fk=fk, fk1=fk1)
        ev = Evaluation(val, grad, c, vjp, self._objective_hessian_diag(), cache)
        if with_jacobian:
            ev.jacobian = self._assemble_jacobian(cache)
        return ev

    def _objective_hessian_diag(self):
        d = np.zeros(self.n)
        start = self.nx_total
        if isinstance(self.objective, TimeOptimal):
            dU = np.zeros((self.N, NU))
        else:
            dU = np.broadcast_to(2.0 * self.objective.weights, (self.N, NU))
        d[start : start + self.nu_total] = dU.ravel()
        return d

    def constraint_hessian(self, z, y) -> sp.csr_matrix:
        """Exact sparse Hessian of ``y^T c(z)``.

        The dynamics are affine in everything except the rotation of thrust by
        ``theta``, so each interval's 33x33 block (two knots plus the knot
        spacing) is a handful of outer products.
        """
        X, U, T = self.unpack(z)
        p = self.params
        N = self.N
        K = N - 1
        h = T / K
        f = dynamics(X, U, p)
        A, B = jacobians(X, U, p)
        f0, f1 = f[:-1], f[1:]
        x_m = 0.5 * (X[:-1] + X[1:]) + h / 8.0 * (f0 - f1)
        u_m = 0.5 * (U[:-1] + U[1:])
        A_m, B_m = jacobians(x_m, u_m, p)
        y = np.asarray(y, dtype=float).reshape(K, NX)
        A0, A1, B0, B1 = A[:-1], A[1:], B[:-1], B[1:]

        def tvec(M, v):
            return np.einsum("kji,kj->ki", M, v)

        H = np.zeros((K, 33, 33))
        ix0 = slice(0, 7)
        iu0 = slice(7, 16)
        ix1 = slice(16, 23)
        iu1 = slice(23, 32)
        TH0, TH1 = 2, 18
        F0 = slice(8, 16)
        F1 = slice(24, 32)

        def add_hf(theta, forces, v, weight, th_idx, f_sl):
            a, b = _thrust_curvature(theta, forces, v, p)
            H[:, th_idx, th_idx] += weight * a
            H[:, th_idx, f_sl] += weight * b
            H[:, f_sl, th_idx] += weight * b

        # knot terms of -(h/6)(y.f0 + y.f1)
        add_hf(X[:-1, 2], U[:-1, 1:], y, -h / 6.0, TH0, F0)
        add_hf(X[1:, 2], U[1:, 1:], y, -h / 6.0, TH1, F1)

        # midpoint Jacobian rows
        Jm = np.zeros((K, NX + NU, 33))
        Jm[:, :NX, ix0] = 0.5 * _EYE + h / 8.0 * A0
        Jm[:, :NX, iu0] = h / 8.0 * B0
        Jm[:, :NX, ix1] = 0.5 * _EYE - h / 8.0 * A1
        Jm[:, :NX, iu1] = -h / 8.0 * B1
        Jm[:, :NX, 32] = (f0 - f1) / 8.0
        Jm[:, NX:, iu0] = 0.5 * np.eye(NU)
        Jm[:, NX:, iu1] = 0.5 * np.eye(NU)

        # -(2h/3) * Jm^T Hf_mid(y) Jm
        a_m, b_m = _thrust_curvature(x_m[:, 2], u_m[:, 1:], y, p)
        r = Jm[:, 2, :]
        s_vec = np.einsum("ki,kij->kj", b_m, Jm[:, NX + 1 :, :])
        wgt = -2.0 * h / 3.0
        H += wgt * (a_m[:, None, None] * r[:, :, None] * r[:, None, :]
                    + r[:, :, None] * s_vec[:, None, :] + s_vec[:, :, None] * r[:, None, :])

        # -(2h/3) * sum_j (A_m^T y)_j * Hess(x_m_j): knot curvature at h/8 and h cross terms
        w = tvec(A_m, y)
        add_hf(X[:-1, 2], U[:-1, 1:], w, wgt * h / 8.0, TH0, F0)
        add_hf(X[1:, 2], U[1:, 1:], w, -wgt * h / 8.0, TH1, F1)

        if self.free_time:
            e = np.zeros((K, 33))
            # derivative of (f0 - f1) . w
            e[:, ix0] = tvec(A0, w)
            e[:, iu0] = tvec(B0, w)
            e[:, ix1] = -tvec(A1, w)
            e[:, iu1] = -tvec(B1, w)
            cross = wgt / 8.0 * e
            # derivative of the explicit h prefactors
            g1 = np.zeros((K, 33))
            g1[:, ix0] = tvec(A0, y)
            g1[:, iu0] = tvec(B0, y)
            g1[:, ix1] = tvec(A1, y)
            g1[:, iu1] = tvec(B1, y)
            g_psi = np.einsum("kij,ki->kj", Jm[:, :NX, :], w) + np.einsum("kij,ki->kj", Jm[:, NX:, :], tvec(B_m, y))
            cross = cross - g1 / 6.0 - 2.0 / 3.0 * g_psi
            H[:, :, 32] += cross
            H[:, 32, :] += cross

        gidx = np.empty((K, 33), dtype=int)
        k = np.arange(K)[:, None]
        gidx[:, ix0] = k * NX + np.arange(NX)
        gidx[:, iu0] = self.nx_total + k * NU + np.arange(NU)
        gidx[:, ix1] = (k + 1) * NX + np.arange(NX)
        gidx[:, iu1] = self.nx_total + (k + 1) * NU + np.arange(NU)
        if self.free_time:
            gidx[:, 32] = self.n - 1
            scale = np.ones(33)
            scale[32] = 1.0 / K
            H = H * scale[None, :, None] * scale[None, None, :]
            blocks, idx = H, gidx
        else:
            blocks, idx = H[:, :32, :32], gidx[:, :32]
        rows = np.broadcast_to(idx[:, :, None], blocks.shape).ravel()
        cols = np.broadcast_to(idx[:, None, :], blocks.shape).ravel()
        return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(self.n, self.n)).tocsr()

    def jacobian(self, z) -> sp.csr_matrix:
        """Sparse Jacobian of the defect constraints."""
        return self.evaluate(z, with_jacobian=True).jacobian

    def _assemble_jacobian(self, cch) -> sp.csr_matrix:
        h, A, B, A_m, B_m = cch["h"], cch["A"], cch["B"], cch["A_m"], cch["B_m"]
        Ak, Ak1, Bk, Bk1 = A[:-1], A[1:], B[:-1], B[1:]
        AmAk = A_m @ Ak
        AmAk1 = A_m @ Ak1
        Dxk = -_EYE - h / 6.0 * Ak - h / 3.0 * A_m - h * h / 12.0 * AmAk
        Dxk1 = _EYE - h / 6.0 * Ak1 - h / 3.0 * A_m + h * h / 12.0 * AmAk1
        Duk = -h / 6.0 * Bk - h * h / 12.0 * (A_m @ Bk) - h / 3.0 * B_m
        Duk1 = -h / 6.0 * Bk1 + h * h / 12.0 * (A_m @ Bk1) - h / 3.0 * B_m
        N = self.N
        rows, cols, vals = [], [], []
        k = np.arange(N - 1)
        r = (k[:, None] * NX + np.arange(NX)[None, :])  # (N-1, 7)

        def add(block, col_start, width):
            rr = np.broadcast_to(r[:, :, None], block.shape)
            cc = np.broadcast_to(col_start[:, None, None] + np.arange(width)[None, None, :], block.shape)
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(block.ravel())

        add(Dxk, k * NX, NX)
        add(Dxk1, (k + 1) * NX, NX)
        add(Duk, self.nx_total + k * NU, NU)
        add(Duk1, self.nx_total + (k + 1) * NU, NU)
        if self.free_time:
            dd_dh = -cch["quad"] / 6.0 - h / 12.0 * np.einsum("kij,kj->ki", A_m, cch["fk"] - cch["fk1"])
            rows.append(r.ravel())
            cols.append(np.full(r.size, self.n - 1))
            vals.append((dd_dh / (N - 1)).ravel())
        J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n_defects, self.n))
        return J.tocsr()

    # -- initial guess --------------------------------------------------
    def initial_guess(self, final_time_guess: float | None = None):
        """Dynamically consistent smooth guess.

        Pose follows the cubic Hermite blend of the boundary poses and
        velocities, the wheel speed ramps linearly, and each knot's thrusts
        are a small-norm non-negative allocation of the required wrench.
        """
        b = self.boundary
        T = self.final_time if not self.free_time else final_time_guess
        if T is None:
            T = smooth_time_estimate(b.x_init, b.x_final, self.params, b)
        X, U = smooth_guess(b, self.N, T, self.params)
        return self.pack(X, U, T if self.free_time else None)

    def problem(self, x0=None) -> NlpProblem:
        lo, hi = self.bounds()
        pin_idx, pin_val = self.boundary_pins()
        x_scale, c_scale = self.scales()
        if x0 is None:
            x0 = self.initial_guess()
        if isinstance(self.objective, TimeOptimal):
            f_scale = 1.0
        else:
            f_scale = 1.0 / (self.N * self.params.nominal_thrust**2 * float(np.max(self.objective.weights)))
        return NlpProblem(
            n=self.n, m=self.n_defects, evaluate=self.evaluate, jacobian=self.jacobian,
            constraint_hessian=self.constraint_hessian,
            band_order=self.band_order(), n_border=1 if self.free_time else 0,
            lower=lo, upper=hi, x0=np.asarray(x0, dtype=float),
            pin_index=pin_idx, pin_value=pin_val,
            x_scale=x_scale, c_scale=c_scale, f_scale=f_scale,
        )

    def to_trajectory(self, z):
        from .trajectory import Trajectory

        X, U, T = self.unpack(z)
        return Trajectory(np.linspace(0.0, T, self.N), X.copy(), U.copy())


def bang_bang_time_estimate(x_init, x_final, params: PlatformParams, boundary=None) -> float:
    """Rough rest-to-rest duration from single-axis bang-bang arcs."""
    d = float(np.hypot(*(np.asarray(x_final)[:2] - np.asarray(x_init)[:2])))
    dth = abs(float(x_final[2] - x_init[2]))
    a = 2.0 * params.nominal_thrust / params.mass
    alpha = 4.0 * params.thruster_arm * params.nominal_thrust / params.body_inertia

    def arc(dist, acc, vmax):
        if dist <= 0:
            return 0.0
        if vmax is not None and np.sqrt(dist * acc) > vmax:
            return dist / vmax + vmax / acc
        return 2.0 * np.sqrt(dist / acc)

    vmax = wmax = None
    if boundary is not None:
        vmax = float(min(boundary.state_upper[3], boundary.state_upper[4], -boundary.state_lower[3]))
        wmax = float(min(boundary.state_upper[5], -boundary.state_lower[5]))
    t = max(arc(d, a, vmax), arc(dth, alpha, wmax))
    return max(1.2 * t, 1.0)


def _allocation_matrix(params: PlatformParams):
    return np.vstack([THRUSTER_FX, THRUSTER_FY, params.thruster_arm * THRUSTER_TORQUE])


def allocate_wrench(fx, fy, mz, params: PlatformParams, reg: float = 1e-3):
    """Small-norm non-negative thrusts producing a body wrench (least squares)."""
    G = _allocation_matrix(params)
    A = np.vstack([G, np.sqrt(reg) * np.eye(N_THRUSTERS)])
    out = np.empty(np.shape(fx) + (N_THRUSTERS,))
    for k, w in enumerate(np.column_stack([np.ravel(fx), np.ravel(fy), np.ravel(mz)])):
        out.reshape(-1, N_THRUSTERS)[k] = scipy.optimize.nnls(A, np.r_[w, np.zeros(N_THRUSTERS)])[0]
    return out


def smooth_guess(boundary: BoundarySpec, n_knots: int, final_time: float, params: PlatformParams):
    b, T = boundary, float(final_time)
    s = np.linspace(0.0, 1.0, n_knots)[:, None]
    h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
    h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
    d00, d10 = (6 * s**2 - 6 * s) / T, 3 * s**2 - 4 * s + 1
    d01, d11 = (-6 * s**2 + 6 * s) / T, 3 * s**2 - 2 * s
    a00, a10 = (12 * s - 6) / T**2, (6 * s - 4) / T
    a01, a11 = (-12 * s + 6) / T**2, (6 * s - 2) / T
    p0, pf = b.x_init[:3], b.x_final[:3]
    v0, vf = b.x_init[3:6], b.x_final[3:6]
    pos = h00 * p0 + h10 * T * v0 + h01 * pf + h11 * T * vf
    vel = d00 * p0 + d10 * v0 + d01 * pf + d11 * vf
    acc = a00 * p0 + a10 * v0 + a01 * pf + a11 * vf
    w0, wf = b.x_init[6], b.x_final[6]
    wheel = (1 - s[:, 0]) * w0 + s[:, 0] * wf
    tau = np.full(n_knots, params.wheel_inertia * (wf - w0) / T)
    theta = pos[:, 2]
    c, sn = np.cos(theta), np.sin(theta)
    fw_x, fw_y = params.mass * acc[:, 0], params.mass * acc[:, 1]
    fb_x = c * fw_x + sn * fw_y
    fb_y = -sn * fw_x + c * fw_y
    mz = params.body_inertia * acc[:, 2] + tau
    X = np.column_stack([pos, vel, wheel])
    U = np.column_stack([tau, allocate_wrench(fb_x, fb_y, mz, params)])
    X = np.clip(X, b.state_lower, b.state_upper)
    U = np.clip(U, b.control_lower, b.control_upper)
    X[0], X[-1] = b.x_init, b.x_final
    return X, U


def smooth_time_estimate(x_init, x_final, params: PlatformParams, boundary=None) -> float:
    """Duration at which the smooth guess stays within the actuator limits."""
    d = float(np.hypot(*(np.asarray(x_final)[:2] - np.asarray(x_init)[:2])))
    dth = abs(float(x_final[2] - x_init[2]))
    a = 2.0 * params.nominal_thrust / params.mass
    alpha = 4.0 * params.thruster_arm * params.nominal_thrust / params.body_inertia
    t = np.sqrt(6.0 * (d / a + dth / alpha))
    return max(1.1 * t, bang_bang_time_estimate(x_init, x_final, params, boundary))
