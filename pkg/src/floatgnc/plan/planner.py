"""Two-phase trajectory planning: time-optimal, then fuel-optimal."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..model import NU, PlatformParams
from .collocation import (
    BoundarySpec, Fuel, TimeOptimal, Transcription, fuel_cost, trajectory_defects,
)
from .nlp import NlpProblem, NlpSolution, SolverOptions
from .nlp import solve as nlp_solve
from .trajectory import Trajectory

log = logging.getLogger(__name__)

DEFECT_TOL = 1e-6
BOUND_TOL = 1e-9
BOUNDARY_TOL = 1e-8


class PlanningError(RuntimeError):
    """Raised when a planning phase fails; ``phase`` names the failing one."""

    def __init__(self, phase: str, message: str, solution: NlpSolution | None = None):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase
        self.solution = solution


@dataclass(frozen=True)
class PlanOptions:
    n_knots: int = 100
    alpha: float = 1.5
    fuel_weights: np.ndarray = field(default_factory=lambda: Fuel().weights)
    time_regularization: float = 1e-3
    initialization: str = "smooth"  # "smooth" or "linear"
    solver: SolverOptions = SolverOptions()

    def __post_init__(self):
        if self.n_knots < 2:
            raise ValueError("n_knots must be >= 2")
        if not self.alpha >= 1.0:
            raise ValueError("alpha must be >= 1")
        if self.initialization not in ("smooth", "linear"):
            raise ValueError("initialization must be 'smooth' or 'linear'")


@dataclass
class PlanResult:
    trajectory: Trajectory
    time_optimal: Trajectory | None
    optimal_time: float
    fuel: float
    time_optimal_fuel: float
    solve_seconds: float
    phases: dict = field(default_factory=dict)


def transcribe(boundary: BoundarySpec, n_knots: int, objective, params: PlatformParams,
               final_time: float | None = None) -> Transcription:
    """Build the collocation NLP; infeasible bounds are rejected up front."""
    if n_knots < 2:
        raise ValueError("n_knots must be >= 2")
    boundary.check()
    return Transcription(boundary, n_knots, params, objective, final_time=final_time)


def _linear_guess(tr: Transcription, final_time_guess=None):
    b = tr.boundary
    s = np.linspace(0.0, 1.0, tr.N)[:, None]
    X = (1 - s) * b.x_init + s * b.x_final
    U = np.clip(np.zeros((tr.N, NU)), b.control_lower, b.control_upper)
    T = None
    if tr.free_time:
        from .collocation import bang_bang_time_estimate
        T = final_time_guess or bang_bang_time_estimate(b.x_init, b.x_final, tr.params, b)
    return tr.pack(X, U, T)


def solve(tr: Transcription, options: SolverOptions = SolverOptions(), x0=None) -> NlpSolution:
    problem: NlpProblem = tr.problem(x0)
    return nlp_solve(problem, options)


def validate_trajectory(traj: Trajectory, boundary: BoundarySpec, params: PlatformParams,
                        defect_tol: float = DEFECT_TOL, bound_tol: float = BOUND_TOL,
                        boundary_tol: float = BOUNDARY_TOL) -> dict:
    """Independent feasibility check of a trajectory; raises ``ValueError`` on failure."""
    if traj.is_null:
        err = float(np.max(np.abs(traj.states[0] - boundary.x_init)))
        if err > boundary_tol:
            raise ValueError("null trajectory does not hold the initial state")
        return {"max_defect": 0.0, "bound_violation": 0.0, "boundary_residual": err}
    dt = np.diff(traj.times)
    if not np.allclose(dt, traj.knot_spacing, rtol=1e-9, atol=0.0):
        raise ValueError("knots are not uniformly spaced")
    d = float(np.max(np.abs(trajectory_defects(traj, params))))
    bv = max(
        float(np.max(boundary.state_lower - traj.states)), float(np.max(traj.states - boundary.state_upper)),
        float(np.max(boundary.control_lower - traj.controls)),
        float(np.max(traj.controls - boundary.control_upper)), 0.0,
    )
    br = max(float(np.max(np.abs(traj.states[0] - boundary.x_init))),
             float(np.max(np.abs(traj.states[-1] - boundary.x_final))))
    report = {"max_defect": d, "bound_violation": bv, "boundary_residual": br}
    if d > defect_tol:
        raise ValueError(f"trajectory defect {d:.3e} exceeds {defect_tol:.1e}")
    if bv > bound_tol:
        raise ValueError(f"bound violation {bv:.3e} exceeds {bound_tol:.1e}")
    if br > boundary_tol:
        raise ValueError(f"boundary residual {br:.3e} exceeds {boundary_tol:.1e}")
    return report


def _run_phase(phase, tr, options, x0, boundary, params):
    sol = solve(tr, options, x0)
    info = {
        "status": sol.status, "converged": sol.converged, "objective": sol.objective,
        "outer_iterations": sol.outer_iterations, "inner_iterations": sol.inner_iterations,
        "max_defect": sol.max_defect,
    }
    if not sol.converged:
        raise PlanningError(phase, f"solver did not converge ({sol.status}, "
                                   f"max defect {sol.max_defect:.2e})", sol)
    traj = tr.to_trajectory(sol.x)
    try:
        info.update(validate_trajectory(traj, boundary, params))
    except ValueError as exc:
        raise PlanningError(phase, f"re-validation failed: {exc}", sol) from exc
    return traj, sol, info


def stretch(traj: Trajectory, factor: float, params: PlatformParams) -> Trajectory:
    """Slow a trajectory down in time by ``factor``.

    Velocities scale by ``1/factor`` and the wrench by ``1/factor**2``, which
    keeps rest-to-rest motions dynamically consistent.
    """
    X = traj.states.copy()
    X[:, 3:] /= factor
    U = traj.controls / factor**2
    return Trajectory(traj.times * factor, X, U)


def _translated(traj: Trajectory, dx: float, dy: float) -> Trajectory:
    X = traj.states.copy()
    X[:, 0] += dx
    X[:, 1] += dy
    return Trajectory(traj.times, X, traj.controls)


def plan_two_phase(boundary: BoundarySpec, params: PlatformParams,
                   options: PlanOptions = PlanOptions()) -> PlanResult:
    """Time-optimal solve for ``t_f*``, then a fuel-optimal solve at ``alpha * t_f*``.

    The problem is solved in a frame whose origin is the start position, so
    the result is exactly translation invariant in the plane.
    """
    boundary.check()
    start = time.perf_counter()
    if np.array_equal(boundary.x_init, boundary.x_final):
        null = Trajectory.null(boundary.x_init)
        return PlanResult(null, null, 0.0, 0.0, 0.0, 0.0, {"degenerate": True})
    dx, dy = (float(v) for v in boundary.x_init[:2])
    local = boundary.shifted(-dx, -dy)
    N = options.n_knots
    weights = np.asarray(options.fuel_weights, dtype=float)

    tr1 = transcribe(local, N, TimeOptimal(options.time_regularization), params)
    x0 = tr1.initial_guess() if options.initialization == "smooth" else _linear_guess(tr1)
    traj1, sol1, info1 = _run_phase("time-optimal", tr1, options.solver, x0, local, params)
    t_star = traj1.final_time
    log.info("time-optimal phase: t_f* = %.6f s (%d inner iterations)", t_star, sol1.inner_iterations)

    t_des = options.alpha * t_star
    tr2 = transcribe(local, N, Fuel(weights), params, final_time=t_des)
    warm = stretch(traj1, options.alpha, params)
    x0 = tr2.pack(warm.states, np.clip(warm.controls, local.control_lower, local.control_upper))
    try:
        traj2, sol2, info2 = _run_phase("fuel", tr2, options.solver, x0, local, params)
        log.info("fuel phase: J = %.6f (%d inner iterations)", sol2.objective, sol2.inner_iterations)
    except PlanningError as exc:
        # at alpha near 1 the feasible set collapses onto the time-optimal
        # solution; the stretched warm start is then the answer if it checks out
        try:
            info2 = validate_trajectory(warm, local, params)
        except ValueError:
            raise exc from None
        log.warning("fuel phase did not converge (%s); using the stretched time-optimal solution", exc)
        traj2 = warm
        info2.update({"fallback": True, "status": str(exc)})

    return PlanResult(
        trajectory=_translated(traj2, dx, dy), time_optimal=_translated(traj1, dx, dy),
        optimal_time=t_star,
        fuel=fuel_cost(traj2.controls, weights),
        time_optimal_fuel=fuel_cost(traj1.controls, weights),
        solve_seconds=time.perf_counter() - start,
        phases={"time-optimal": info1, "fuel": info2},
    )
