"""Controllability machinery: the Grammian of the input map under the
solution-operator flow, the regularized steering law

    u_eps(t) = B^T D(T - t) (eps I + Gamma)^{-1} p(x),

and the outer fixed point coupling the control to the mild solver.  The
steering residual p(x) collects everything the control must account for:

    p(x) = h - D(T) (phi(0) - g(x)(0))
             - sum_k D(T - t_k) I_k(x(t_k^-))
             - int_0^T D(T - s) f(s, x(s), x_s) ds.

The Grammian shares the trajectory grid and quadrature, which makes the
one-dimensional linear steering identity terminal_error = eps/(eps+Gamma)*|p|
hold exactly at the discrete level.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, ConvergenceError, DomainError, EvaluationError
from .model import FloatArray, ProblemSpec, eval_g, eval_impulse
from .solver import (
    ControlSignal,
    Grid,
    SolutionKernel,
    Trajectory,
    forcing_along,
    solve_mild,
)


@dataclass(frozen=True)
class Grammian:
    """Symmetric PSD matrix int_0^T D(T-s) B B^T D(T-s) ds with the
    quadrature resolution it was built at."""

    matrix: FloatArray
    quad_order: int

    def __post_init__(self):
        m = self.matrix
        if not np.allclose(m, m.T, atol=1e-12):
            raise EvaluationError("Grammian is not symmetric", regime="grammian")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise EvaluationError("Grammian is not PSD", regime="grammian")


@dataclass
class SteeringReport:
    eps: float
    terminal_error: float
    control_energy: float
    outer_iters: int
    inner_residuals: list = field(default_factory=list)
    converged: bool = True
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.terminal_error < 0.0 or self.control_energy < 0.0:
            raise ConfigError("report metrics must be non-negative")

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "terminal_error": self.terminal_error,
            "control_energy": self.control_energy,
            "outer_iters": self.outer_iters,
            "inner_residuals": self.inner_residuals,
            "converged": self.converged,
            "warnings": self.warnings,
        }


def grammian(spec: ProblemSpec, grid: Grid) -> Grammian:
    """Trapezoid-rule Grammian on the trajectory grid."""
    kernel = SolutionKernel(spec, grid)
    m_max = grid.n_fwd
    w = grid.trapezoid_weights(m_max)
    G = np.zeros((spec.n_modes, spec.n_modes))
    for m in range(m_max + 1):
        DB = kernel.table[m_max - m][:, None] * spec.B  # D(T - t_m) B
        G += w[m] * (DB @ DB.T)
    G = 0.5 * (G + G.T)
    return Grammian(G, quad_order=m_max)


def residual_p(spec: ProblemSpec, x: Trajectory, h: FloatArray) -> FloatArray:
    """Steering residual p(x) against the target h."""
    h = spec.check_vector(h)
    grid = x.grid
    if grid.spec is not spec:
        raise DomainError("trajectory grid belongs to a different problem instance")
    kernel = SolutionKernel(spec, grid)
    m_max = grid.n_fwd

    out = h - kernel.table[m_max] * (spec.phi(0.0) - eval_g(spec, x, 0.0))
    for k, m_imp in enumerate(grid.impulse_nodes):
        left = x.values[grid.fwd_row(m_imp)]
        out -= kernel.table[m_max - m_imp] * eval_impulse(spec, k, left)
    if spec.f_desc.kind != "zero":
        f_left, overrides = forcing_along(spec, x)
        w = grid.trapezoid_weights(m_max)
        acc = (w[:, None] * kernel.table[::-1] * f_left).sum(axis=0)
        for j, f_right in overrides.items():
            if 0 < j < m_max:
                acc += 0.5 * grid.h * kernel.table[m_max - j] * (f_right - f_left[j])
        out -= acc
    return out


def synthesize_control(
    spec: ProblemSpec,
    x: Trajectory,
    h: FloatArray,
    eps: float,
    gram: Grammian | None = None,
) -> ControlSignal:
    """Regularized steering law sampled on the trajectory grid."""
    if eps <= 0.0:
        raise ConfigError("eps must be > 0")
    grid = x.grid
    if gram is None:
        gram = grammian(spec, grid)
    p = residual_p(spec, x, h)
    A = gram.matrix + eps * np.eye(spec.n_modes)
    try:
        factor = cho_factor(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise EvaluationError(
            f"factorization of (eps I + Gamma) failed for eps={eps}",
            regime="cholesky",
        ) from exc
    c = cho_solve(factor, p)
    kernel = SolutionKernel(spec, grid)
    m_max = grid.n_fwd
    samples = (kernel.table[::-1] * c) @ spec.B  # row m: B^T D(T - t_m) c
    return ControlSignal(grid, samples[: m_max + 1])


def steer(
    spec: ProblemSpec,
    grid: Grid,
    h: FloatArray,
    eps: float,
    tol: float = 1e-8,
    max_outer: int = 120,
    theta: float = 1.0,
    picard_tol: float = 1e-11,
    picard_max: int = 400,
) -> tuple[SteeringReport, Trajectory, ControlSignal]:
    """Outer fixed point x -> u_eps(x) -> x, damped by theta in (0, 1].

    Successive controls must agree to tol in sup-norm.  The final report
    carries the terminal error |x(T) - h| and the control energy.
    """
    if eps <= 0.0 or tol <= 0.0:
        raise ConfigError("eps and tol must be > 0")
    if not (0.0 < theta <= 1.0):
        raise ConfigError("damping theta must lie in (0, 1]")
    h = spec.check_vector(h)
    gram = grammian(spec, grid)

    u = ControlSignal.zeros(grid)
    traj = solve_mild(spec, u, tol=picard_tol, max_iter=picard_max)
    inner = [traj.residuals]
    warnings_list = list(traj.warnings)
    converged = False
    outer = 0
    diffs = []
    for outer in range(1, max_outer + 1):
        u_raw = synthesize_control(spec, traj, h, eps, gram=gram)
        blended = (1.0 - theta) * u.samples + theta * u_raw.samples
        u_new = ControlSignal(grid, blended)
        diff = u_new.sup_distance(u)
        diffs.append(diff)
        traj = solve_mild(spec, u_new, tol=picard_tol, max_iter=picard_max)
        inner.append(traj.residuals)
        u = u_new
        if diff <= tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"outer steering loop did not converge in {max_outer} iterations "
            f"(last control change {diffs[-1]:.3e})",
            residuals=diffs,
            last_iterate=(traj, u),
        )
    report = SteeringReport(
        eps=eps,
        terminal_error=float(np.linalg.norm(traj.terminal() - h)),
        control_energy=u.energy(),
        outer_iters=outer,
        inner_residuals=inner,
        converged=True,
        warnings=warnings_list,
    )
    return report, traj, u


@dataclass
class SweepEntry:
    eps: float
    report: SteeringReport | None = None
    error: str | None = None


@dataclass
class SweepResult:
    entries: list
    errors_non_increasing: bool

    def reports(self) -> list:
        return [e.report for e in self.entries if e.report is not None]


def epsilon_sweep(
    spec: ProblemSpec,
    grid: Grid,
    h: FloatArray,
    eps_list,
    tol: float = 1e-8,
    max_outer: int = 120,
    theta: float = 1.0,
    picard_tol: float = 1e-11,
    picard_max: int = 400,
    max_workers: int = 1,
) -> SweepResult:
    """One steering run per eps (strictly decreasing list); failures are
    recorded per entry and the sweep continues.  Entries are independent, so
    they may run on a small thread pool; results merge by position, keeping
    the output independent of scheduling."""
    eps_list = [float(e) for e in eps_list]
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps values must be strictly decreasing")
    h = spec.check_vector(h)

    def run_one(eps: float) -> SweepEntry:
        try:
            report, _, _ = steer(
                spec, grid, h, eps,
                tol=tol, max_outer=max_outer, theta=theta,
                picard_tol=picard_tol, picard_max=picard_max,
            )
            return SweepEntry(eps=eps, report=report)
        except (ConvergenceError, EvaluationError) as exc:
            return SweepEntry(eps=eps, error=str(exc))

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            entries = list(pool.map(run_one, eps_list))
    else:
        entries = [run_one(e) for e in eps_list]

    errs = [e.report.terminal_error for e in entries if e.report is not None]
    non_increasing = all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
    return SweepResult(entries=entries, errors_non_increasing=non_increasing)
