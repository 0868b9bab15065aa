"""Performance-index evaluation along mild solutions and its minimization
over piecewise-constant controls by projected gradient descent with central
finite-difference gradients.

The running cost defaults to the quadratic form |x|^2 + |x_t|_r^2 + |u|^2;
the history norm |x_t|_r is the max sample norm over the trailing delay
window.  The direct method mirrors the minimizing-sequence structure of the
existence argument: parameterize, then descend, projecting onto the
admissible box after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError
from .model import FloatArray, HistorySegment, ProblemSpec
from .solver import ControlSignal, Grid, Trajectory, solve_mild


@dataclass(frozen=True)
class CostDescriptor:
    """Running cost L(t, x, x_t, u) with its declared coercivity data.

    The default weights reproduce the quadratic flagship cost; d, e, f_u and
    the M2 curve document the lower bound L >= M2(t) + d|x| + e|x_t|_r +
    f_u |u|^2 that the descriptor is expected to satisfy."""

    w_state: float = 1.0
    w_hist: float = 1.0
    w_control: float = 1.0
    d: float = 0.0
    e: float = 0.0
    f_u: float = 1.0
    M2: Callable[[float], float] | float = 0.0

    def __post_init__(self):
        if min(self.w_state, self.w_hist, self.w_control) < 0.0:
            raise ConfigError("cost weights must be >= 0")
        if self.f_u > self.w_control:
            raise ConfigError("coercivity f_u cannot exceed the control weight")

    def m2_at(self, t: float) -> float:
        return self.M2(t) if callable(self.M2) else float(self.M2)

    def evaluate(self, t: float, x: FloatArray, hist: HistorySegment, u: FloatArray) -> float:
        hist_norm = hist.sup_norm() if self.w_hist != 0.0 else 0.0
        return float(
            self.w_state * np.dot(x, x)
            + self.w_hist * hist_norm**2
            + self.w_control * np.dot(u, u)
        )

    def lower_bound(self, t: float, x: FloatArray, hist: HistorySegment, u: FloatArray) -> float:
        return (
            self.m2_at(t)
            + self.d * float(np.linalg.norm(x))
            + self.e * hist.sup_norm()
            + self.f_u * float(np.dot(u, u))
        )


@dataclass(frozen=True)
class ControlParameterization:
    """Piecewise-constant controls: P intervals of equal length, one state
    vector per interval, admissible set a closed box [lower, upper]."""

    intervals: int
    n_modes: int
    lower: FloatArray
    upper: FloatArray

    def __post_init__(self):
        if self.intervals < 1:
            raise ConfigError("P must be >= 1")
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (self.intervals, self.n_modes)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (self.intervals, self.n_modes)).copy()
        if np.any(lo > hi):
            raise ConfigError("admissible box is empty")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def boxed(cls, intervals: int, n_modes: int, bound: float) -> "ControlParameterization":
        return cls(intervals, n_modes, -abs(bound), abs(bound))

    def project(self, theta: FloatArray) -> FloatArray:
        return np.clip(theta, self.lower, self.upper)

    def expand(self, grid: Grid, theta: FloatArray) -> ControlSignal:
        """Piecewise-constant expansion onto the forward grid (right-open
        intervals; the final node belongs to the last interval)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.intervals, self.n_modes):
            raise DomainError(f"theta must have shape ({self.intervals}, {self.n_modes})")
        ts = grid.forward_times()
        idx = np.minimum(
            (ts / grid.spec.horizon * self.intervals).astype(int), self.intervals - 1
        )
        return ControlSignal(grid, theta[idx])


def eval_cost(
    spec: ProblemSpec,
    cost: CostDescriptor,
    u: ControlSignal,
    tol: float = 1e-10,
    traj: Trajectory | None = None,
) -> float:
    """Trapezoid approximation of int_0^T L dt along the solved trajectory."""
    if traj is None:
        traj = solve_mild(spec, u, tol=tol)
    grid = u.grid
    m_max = grid.n_fwd
    samples = np.empty(m_max + 1)
    for m in range(m_max + 1):
        samples[m] = cost.evaluate(
            float(grid.times[grid.fwd_row(m)]),
            traj.values[grid.fwd_row(m)],
            traj.history_at(m),
            u.samples[m],
        )
    w = grid.trapezoid_weights(m_max)
    return float(w @ samples)


@dataclass(frozen=True)
class MinimizeOptions:
    step: float = 0.5
    max_evals: int = 4000
    fd_step: float = 1e-5
    stat_tol: float = 1e-9
    max_backtracks: int = 30


@dataclass
class MinimizeResult:
    u_opt: ControlSignal
    J_opt: float
    theta_opt: FloatArray
    history: list
    converged: bool
    n_evals: int


def minimize(
    spec: ProblemSpec,
    grid: Grid,
    cost: CostDescriptor,
    param: ControlParameterization,
    opts: MinimizeOptions = MinimizeOptions(),
    theta0: FloatArray | None = None,
    tol: float = 1e-10,
) -> MinimizeResult:
    """Projected-gradient descent with central finite-difference gradients.

    Steps are accepted only when they decrease J (backtracking halving), so
    the best-J history is non-increasing; exhausting the evaluation budget
    returns the best iterate flagged as non-converged."""
    if param.n_modes != spec.n_modes:
        raise ConfigError("parameterization dimension does not match the problem")
    n_evals = 0

    def J_of(theta: FloatArray) -> float:
        nonlocal n_evals
        n_evals += 1
        return eval_cost(spec, cost, param.expand(grid, theta), tol=tol)

    theta = param.project(
        np.zeros((param.intervals, param.n_modes)) if theta0 is None else np.asarray(theta0, float)
    )
    J = J_of(theta)
    history = [J]
    converged = False
    fd_scale = opts.fd_step

    while n_evals < opts.max_evals:
        # central finite differences over the parameter coefficients
        grad = np.zeros_like(theta)
        hstep = fd_scale * np.maximum(1.0, np.abs(theta))
        flat = theta.ravel()
        gflat = grad.ravel()
        hflat = hstep.ravel()
        for i in range(flat.size):
            if n_evals + 2 > opts.max_evals:
                break
            e = np.zeros_like(flat)
            e[i] = hflat[i]
            gflat[i] = (J_of((flat + e).reshape(theta.shape)) - J_of((flat - e).reshape(theta.shape))) / (
                2.0 * hflat[i]
            )
        gnorm = float(np.linalg.norm(gflat))
        if gnorm == 0.0:
            converged = True
            break

        step = opts.step
        accepted = False
        for _ in range(opts.max_backtracks):
            if n_evals >= opts.max_evals:
                break
            cand = param.project(theta - step * grad)
            J_cand = J_of(cand)
            if J_cand < J - 1e-15:
                move = float(np.linalg.norm(cand - theta))
                theta = cand
                J = J_cand
                history.append(J)
                accepted = True
                if move <= opts.stat_tol:
                    converged = True
                break
            step *= 0.5
        if not accepted:
            # no descent direction at the finest step: stationary (or boxed)
            converged = n_evals < opts.max_evals
            break
        if converged:
            break

    return MinimizeResult(
        u_opt=param.expand(grid, theta),
        J_opt=J,
        theta_opt=theta,
        history=history,
        converged=converged,
        n_evals=n_evals,
    )


@dataclass(frozen=True)
class ConvexityReport:
    lhs: float  # J((u1 + u2) / 2)
    rhs: float  # (J(u1) + J(u2)) / 2
    satisfied: bool


def verify_convexity(
    spec: ProblemSpec,
    cost: CostDescriptor,
    u1: ControlSignal,
    u2: ControlSignal,
    tol: float = 1e-10,
    slack: float = 1e-8,
) -> ConvexityReport:
    """Midpoint convexity check J((u1+u2)/2) <= (J(u1)+J(u2))/2 + slack.

    Only meaningful when the control-to-trajectory map is affine, so specs
    with a non-affine nonlinearity are refused."""
    if not spec.f_desc.is_linear:
        raise DomainError(
            "convexity verification requires linear dynamics; the spec's "
            f"nonlinearity kind {spec.f_desc.kind!r} is not affine"
        )
    if not u1.grid.compatible_with(u2.grid):
        raise DomainError("controls must share one grid")
    mid = ControlSignal(u1.grid, 0.5 * (u1.samples + u2.samples))
    lhs = eval_cost(spec, cost, mid, tol=tol)
    rhs = 0.5 * (eval_cost(spec, cost, u1, tol=tol) + eval_cost(spec, cost, u2, tol=tol))
    return ConvexityReport(lhs=lhs, rhs=rhs, satisfied=lhs <= rhs + slack)
