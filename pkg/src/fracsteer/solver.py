"""Mild-solution solver: Picard iteration on the variation-of-parameters
formula with impulse sums, delay history, and the nonlocal initial condition.

On the grid restricted to [0, T] the converged trajectory satisfies, between
impulses and to quadrature accuracy,

    x(t) = D(t) (phi(0) - g(x)(0))
         + sum_{0 < t_k < t} D(t - t_k) I_k(x(t_k^-))
         + int_0^t D(t - s) (B u(s) + f(s, x(s), x_s)) ds,

with D the diagonal solution operator, while x(s) = phi(s) - g(x)(s) holds on
[-r, 0].  Values stored at impulse nodes are left limits; the right value is
kept separately and used by every integral segment that starts there.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, DomainError
from .mittag import mittag_leffler
from .model import FloatArray, HistorySegment, ProblemSpec, eval_f, eval_g, eval_impulse

_NODE_TOL = 1e-9


def _as_steps(value: float, h: float, what: str) -> int:
    n = round(value / h)
    if abs(value - n * h) > _NODE_TOL * max(1.0, abs(value)):
        raise ConfigError(
            f"{what}={value} is not commensurate with the step dt={h}; "
            "choose dt so that T, r, impulse times and nonlocal anchors are "
            "integer multiples of it"
        )
    return int(n)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform grid from -r to T; 0, every impulse time and every nonlocal
    anchor are exact nodes.  Forward index m counts nodes in [0, T]."""

    spec: ProblemSpec
    h: float
    n_hist: int = field(init=False)  # nodes below 0 (r / h)
    n_fwd: int = field(init=False)  # steps in [0, T] (T / h)
    times: FloatArray = field(init=False)
    impulse_nodes: tuple[int, ...] = field(init=False)  # forward indices

    def __post_init__(self):
        if self.h <= 0.0:
            raise ConfigError("dt must be > 0")
        nh = _as_steps(self.spec.delay, self.h, "delay r")
        nf = _as_steps(self.spec.horizon, self.h, "horizon T")
        imp = tuple(_as_steps(d.t, self.h, f"impulse time {d.t}") for d in self.spec.impulses)
        for term in self.spec.nonlocal_terms:
            _as_steps(term.tau, self.h, f"nonlocal anchor {term.tau}")
        object.__setattr__(self, "n_hist", nh)
        object.__setattr__(self, "n_fwd", nf)
        object.__setattr__(self, "times", np.arange(-nh, nf + 1) * self.h)
        object.__setattr__(self, "impulse_nodes", imp)

    def __len__(self) -> int:
        return self.n_hist + self.n_fwd + 1

    def compatible_with(self, other: "Grid") -> bool:
        return (
            self is other
            or (self.h == other.h and self.n_hist == other.n_hist and self.n_fwd == other.n_fwd)
        )

    def row(self, t: float) -> int:
        """Array row of grid time t (history rows included)."""
        i = round(t / self.h) + self.n_hist
        if not (0 <= i < len(self)) or abs(self.times[i] - t) > _NODE_TOL * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not a grid node")
        return int(i)

    def fwd_row(self, m: int) -> int:
        return self.n_hist + m

    def forward_times(self) -> FloatArray:
        return self.times[self.n_hist :]

    def trapezoid_weights(self, m: int) -> FloatArray:
        w = np.full(m + 1, self.h)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


# Kernel tables are shared across Picard sweeps, outer iterations and the
# entries of an epsilon sweep; a handful of (alpha, grid, eigs) keys suffices.
_KERNEL_CACHE: OrderedDict = OrderedDict()
_KERNEL_CACHE_MAX = 8


class SolutionKernel:
    """Table of the diagonal solution operator on every grid lag:
    table[m, n] = E_{alpha,1}(lam_n * (m h)^alpha)."""

    def __init__(self, spec: ProblemSpec, grid: Grid):
        self.spec = spec
        self.grid = grid
        key = (
            spec.alpha,
            grid.h,
            grid.n_fwd,
            spec.eigenvalues.tobytes(),
        )
        cached = _KERNEL_CACHE.get(key)
        if cached is not None:
            _KERNEL_CACHE.move_to_end(key)
            self.table = cached
            return
        lags = np.arange(grid.n_fwd + 1) * grid.h
        table = np.empty((grid.n_fwd + 1, spec.n_modes))
        table[0, :] = 1.0
        for n, lam in enumerate(spec.eigenvalues):
            table[1:, n] = [
                mittag_leffler(spec.alpha, 1.0, lam * lag**spec.alpha) for lag in lags[1:]
            ]
        self.table = table
        _KERNEL_CACHE[key] = table
        if len(_KERNEL_CACHE) > _KERNEL_CACHE_MAX:
            _KERNEL_CACHE.popitem(last=False)

    def at_lag(self, m: int) -> FloatArray:
        return self.table[m]


@dataclass
class ControlSignal:
    """Control samples u(t) on the forward grid nodes 0..n_fwd."""

    grid: Grid
    samples: FloatArray  # shape (n_fwd + 1, N)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        expect = (self.grid.n_fwd + 1, self.grid.spec.n_modes)
        if self.samples.shape != expect:
            raise DomainError(f"control samples must have shape {expect}")

    @classmethod
    def zeros(cls, grid: Grid) -> "ControlSignal":
        return cls(grid, np.zeros((grid.n_fwd + 1, grid.spec.n_modes)))

    def energy(self) -> float:
        """int_0^T |u(t)|^2 dt by the grid's trapezoid rule."""
        sq = np.sum(self.samples**2, axis=1)
        w = self.grid.trapezoid_weights(self.grid.n_fwd)
        return float(w @ sq)

    def sup_distance(self, other: "ControlSignal") -> float:
        return float(np.max(np.linalg.norm(self.samples - other.samples, axis=1)))


@dataclass
class Trajectory:
    """Piecewise-continuous sampled path on [-r, T].

    values[row] holds x at grid.times[row]; at an impulse node that is the
    left limit, with the right value in jumps[forward_index]."""

    grid: Grid
    values: FloatArray  # shape (len(grid), N)
    jumps: dict = field(default_factory=dict)  # fwd node -> (left, right)
    warnings: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = True

    def value_at_time(self, t: float) -> FloatArray:
        return self.values[self.grid.row(t)]

    def right_value(self, m: int) -> FloatArray:
        if m in self.jumps:
            return self.jumps[m][1]
        return self.values[self.grid.fwd_row(m)]

    def terminal(self) -> FloatArray:
        return self.values[-1]

    def forward_values(self) -> FloatArray:
        return self.values[self.grid.n_hist :]

    def history_at(self, m: int) -> HistorySegment:
        """Trailing delay window ending at forward node m."""
        g = self.grid
        j0 = g.fwd_row(m) - g.n_hist
        offs = np.arange(-g.n_hist, 1) * g.h
        return HistorySegment(
            base_t=float(g.times[g.fwd_row(m)]),
            offsets=offs,
            values=self.values[j0 : g.fwd_row(m) + 1],
        )

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))


def contraction_check(spec: ProblemSpec, eps: float) -> float:
    """Left-hand side of the contraction inequality,

        M (K l_2 + l_g + T^{1-p} (|L1|_{1/p} + |L2|_{1/p}))
            * (1 + M M_B^2 T / eps);

    the caller compares the returned factor against 1."""
    if eps <= 0.0:
        raise ConfigError("eps must be > 0")
    c = spec.constants
    p = spec.f_desc.holder_p
    inner = c.M * (
        c.K * c.l_2 + c.l_g + spec.horizon ** (1.0 - p) * (c.norm_L1 + c.norm_L2)
    )
    return inner * (1.0 + c.M * c.M_B**2 * spec.horizon / eps)


def picard_factor(spec: ProblemSpec) -> float:
    """Control-free part of the contraction factor, governing the inner
    fixed-point iteration for a fixed control."""
    c = spec.constants
    p = spec.f_desc.holder_p
    return c.M * (
        c.K * c.l_2 + c.l_g + spec.horizon ** (1.0 - p) * (c.norm_L1 + c.norm_L2)
    )


def _convolve_all(
    kernel: SolutionKernel,
    forcing_left: FloatArray,
    right_overrides: dict,
) -> FloatArray:
    """Trapezoid convolution int_0^{t_m} D(t_m - s) w(s) ds for every m.

    right_overrides maps an impulse node j to the forcing's right value
    there, so each segment starting at j integrates the correct branch."""
    grid = kernel.grid
    m_max = grid.n_fwd
    out = np.zeros_like(forcing_left)
    table = kernel.table
    h = grid.h
    for m in range(1, m_max + 1):
        w = grid.trapezoid_weights(m)
        ker = table[m::-1]  # lag m-j for j = 0..m
        acc = (w[:, None] * ker * forcing_left[: m + 1]).sum(axis=0)
        for j, f_right in right_overrides.items():
            if 0 < j < m:
                acc += 0.5 * h * table[m - j] * (f_right - forcing_left[j])
        out[m] = acc
    return out


def convolve(spec: ProblemSpec, forcing, t: float, grid: Grid | None = None) -> FloatArray:
    """int_0^t D(t - s) w(s) ds for one grid time t, trapezoid rule.

    forcing holds samples of w on the forward grid nodes up to at least t.
    """
    forcing = np.atleast_2d(np.asarray(forcing, dtype=float))
    if grid is None:
        if t <= 0.0:
            raise DomainError("t must be a positive grid time")
        h = t / (forcing.shape[0] - 1) if forcing.shape[0] > 1 else t
        grid = Grid(spec, h)
    m = round(t / grid.h)
    if abs(t - m * grid.h) > _NODE_TOL * max(1.0, abs(t)) or m < 0 or m > grid.n_fwd:
        raise DomainError(f"t={t} is not a forward grid node")
    if forcing.shape[0] < m + 1:
        raise DomainError("forcing must be defined on every node up to t")
    if m == 0:
        return np.zeros(spec.n_modes)
    kernel = SolutionKernel(spec, grid)
    w = grid.trapezoid_weights(m)
    ker = kernel.table[m::-1]
    return (w[:, None] * ker * forcing[: m + 1]).sum(axis=0)


def _phi_samples(spec: ProblemSpec, grid: Grid) -> FloatArray:
    return np.stack([spec.phi(s) for s in grid.times[: grid.n_hist + 1]])


def _nonlocal_samples(spec: ProblemSpec, grid: Grid, values: FloatArray) -> FloatArray:
    """g(x)(s) for every history node s; zero when no nonlocal terms."""
    n_hist = grid.n_hist
    out = np.zeros((n_hist + 1, spec.n_modes))
    for term in spec.nonlocal_terms:
        anchor = grid.row(term.tau)
        out += term.c * values[anchor - n_hist : anchor + 1]
    return out


def solve_mild(
    spec: ProblemSpec,
    u: ControlSignal,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> Trajectory:
    """Picard iteration for the mild solution under the control u.

    Stops when the sup-norm distance between successive iterates drops to
    tol; raises ConvergenceError (with the residual history) on budget
    exhaustion.  A contraction factor >= 1 attaches a warning, not an error.
    """
    if tol <= 0.0:
        raise ConfigError("tol must be > 0")
    grid = u.grid
    if grid.spec is not spec:
        raise DomainError("control grid belongs to a different problem instance")
    kernel = SolutionKernel(spec, grid)
    n_hist, n_fwd = grid.n_hist, grid.n_fwd
    n_rows = len(grid)

    warnings_list = []
    rho = picard_factor(spec)
    if rho >= 1.0:
        warnings_list.append(
            f"contraction factor {rho:.3g} >= 1: convergence not guaranteed"
        )

    phi_hist = _phi_samples(spec, grid)
    bu = u.samples @ spec.B.T

    # initial iterate: phi on [-r, 0], extended constantly by phi(0)
    values = np.empty((n_rows, spec.n_modes))
    values[: n_hist + 1] = phi_hist
    values[n_hist + 1 :] = phi_hist[-1]

    work = Trajectory(grid, values)
    residuals: list[float] = []
    f_left = np.empty((n_fwd + 1, spec.n_modes))
    for it in range(max_iter):
        # nonlocal correction on the history window from the previous iterate
        g_hist = _nonlocal_samples(spec, grid, values)
        new_values = np.empty_like(values)
        new_values[: n_hist + 1] = phi_hist - g_hist

        # forcing samples along the previous iterate (left limits at nodes)
        for m in range(n_fwd + 1):
            f_left[m] = eval_f(
                spec, float(grid.times[n_hist + m]), values[n_hist + m], work.history_at(m)
            )
        right_overrides = {}
        jump_vecs = {}
        for k, m_imp in enumerate(grid.impulse_nodes):
            x_left = values[n_hist + m_imp]
            jump_vecs[m_imp] = eval_impulse(spec, k, x_left)
            x_right = x_left + jump_vecs[m_imp]
            f_right = eval_f(
                spec, float(grid.times[n_hist + m_imp]), x_right, work.history_at(m_imp)
            )
            right_overrides[m_imp] = f_right + bu[m_imp]

        conv = _convolve_all(kernel, bu + f_left, right_overrides)

        x0 = new_values[n_hist]
        fwd = kernel.table[: n_fwd + 1] * x0 + conv
        for m_imp, jump in jump_vecs.items():
            if m_imp < n_fwd:
                fwd[m_imp + 1 :] += kernel.table[1 : n_fwd + 1 - m_imp] * jump
        new_values[n_hist:] = fwd

        res = float(np.max(np.linalg.norm(new_values - values, axis=1)))
        residuals.append(res)
        values = new_values
        work = Trajectory(grid, values)
        if res <= tol:
            break
    else:
        raise ConvergenceError(
            f"Picard iteration did not reach tol={tol} in {max_iter} iterations "
            f"(last residual {residuals[-1]:.3e})",
            residuals=residuals,
            last_iterate=work,
        )

    jumps = {}
    for k, m_imp in enumerate(grid.impulse_nodes):
        left = values[n_hist + m_imp]
        jumps[m_imp] = (left.copy(), left + eval_impulse(spec, k, left))
    return Trajectory(
        grid,
        values,
        jumps=jumps,
        warnings=warnings_list,
        residuals=residuals,
        converged=True,
    )


def forcing_along(spec: ProblemSpec, traj: Trajectory) -> tuple[FloatArray, dict]:
    """f(s, x(s), x_s) sampled along a solved trajectory: left values on every
    forward node plus right-value overrides at impulse nodes."""
    grid = traj.grid
    f_left = np.empty((grid.n_fwd + 1, spec.n_modes))
    for m in range(grid.n_fwd + 1):
        f_left[m] = eval_f(
            spec,
            float(grid.times[grid.fwd_row(m)]),
            traj.values[grid.fwd_row(m)],
            traj.history_at(m),
        )
    overrides = {}
    for m_imp in grid.impulse_nodes:
        overrides[m_imp] = eval_f(
            spec,
            float(grid.times[grid.fwd_row(m_imp)]),
            traj.right_value(m_imp),
            traj.history_at(m_imp),
        )
    return f_left, overrides


def nonlocal_residual(spec: ProblemSpec, traj: Trajectory) -> float:
    """max over the history window of |x(s) + g(x)(s) - phi(s)|."""
    grid = traj.grid
    phi_hist = _phi_samples(spec, grid)
    g_hist = _nonlocal_samples(spec, grid, traj.values)
    mismatch = traj.values[: grid.n_hist + 1] + g_hist - phi_hist
    return float(np.max(np.linalg.norm(mismatch, axis=1)))
