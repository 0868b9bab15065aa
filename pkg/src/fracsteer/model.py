"""Problem description in the truncated sine-basis: state vectors, the
nonlinearity / nonlocal / impulse maps, and the constants ledger feeding the
contraction diagnostics.

State vectors are plain float arrays holding coefficients of the orthonormal
basis sqrt(2/pi)*sin(n*y) on [0, pi]; the Euclidean norm of the coefficients
is the L2 norm of the represented function (Parseval).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DomainError, NonlinearityError
from .mittag import mittag_leffler

FloatArray = NDArray[np.float64]


def basis_matrix(n_modes: int, y: FloatArray) -> FloatArray:
    """Rows: sample points y in [0, pi]; columns: sqrt(2/pi) sin(n y)."""
    n = np.arange(1, n_modes + 1)
    return math.sqrt(2.0 / math.pi) * np.sin(np.outer(y, n))


def to_physical(coeffs: FloatArray, y: FloatArray) -> FloatArray:
    """Evaluate the represented function on a physical grid."""
    return basis_matrix(len(coeffs), y) @ coeffs


def project(values: FloatArray, y: FloatArray, n_modes: int) -> FloatArray:
    """L2-project samples on a uniform y-grid back onto the first n_modes."""
    h = y[1] - y[0]
    phi = basis_matrix(n_modes, y)
    w = np.full(len(y), h)
    w[0] *= 0.5
    w[-1] *= 0.5
    return phi.T @ (w * values)


@dataclass(frozen=True)
class ImpulseDescriptor:
    """State jump at time t: I(x) = scale * x."""

    t: float
    kind: str
    scale: float

    def __post_init__(self):
        if self.kind != "linear":
            raise ConfigError(f"unknown impulse kind {self.kind!r}")

    def apply(self, x_left: FloatArray) -> FloatArray:
        return self.scale * x_left

    @property
    def lipschitz(self) -> float:
        return abs(self.scale)


@dataclass(frozen=True)
class NonlocalTerm:
    c: float
    tau: float


@dataclass(frozen=True)
class HistorySegment:
    """Trailing delay window: samples of x(t + s), s in [-r, 0], aligned with
    the trajectory grid.  base_t is the absolute time of the window's right
    end, so sample j sits at absolute time base_t + offsets[j]."""

    base_t: float
    offsets: FloatArray  # uniform, offsets[0] = -r, offsets[-1] = 0
    values: FloatArray  # shape (len(offsets), N)

    def sup_norm(self) -> float:
        if self.values.size == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    @property
    def r(self) -> float:
        return float(-self.offsets[0])

    def last(self) -> FloatArray:
        return self.values[-1]


@dataclass(frozen=True)
class PhiDescriptor:
    """Prescribed history data phi(s) on [-r, 0].

    kinds: "zero"; "constant" (phi(s) = coeffs); "linear" (phi(s) = coeffs +
    s * slope).
    """

    kind: str
    coeffs: FloatArray
    slope: FloatArray | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "linear"):
            raise ConfigError(f"unknown phi kind {self.kind!r}")
        if self.kind == "linear" and self.slope is None:
            raise ConfigError("phi kind 'linear' requires a slope")

    def __call__(self, s: float) -> FloatArray:
        if self.kind == "zero":
            return np.zeros_like(self.coeffs)
        if self.kind == "constant":
            return self.coeffs.copy()
        return self.coeffs + s * self.slope


@dataclass(frozen=True)
class NonlinearityDescriptor:
    """Forcing nonlinearity f(t, x, x_t) with its declared Lipschitz/bound data.

    kinds:
      "zero"    -- f = 0
      "linear"  -- f = gain * x
      "memory"  -- f1(t, x) + integral over the delay window of
                   h(t - s) f2(s, x(s)) ds with h(tau) = exp(-rate * tau);
                   f1/f2 are gain*x ("linear") or gain*x/(1+|x|) ("saturating").

    L1, L2 are the declared Lipschitz constants in x and in the history,
    M1 the declared bound, holder_p the exponent p in (0, alpha-1).
    """

    kind: str
    params: dict
    L1: float = 0.0
    L2: float = 0.0
    M1: float = 0.0
    holder_p: float = 0.25

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "memory"):
            raise ConfigError(f"unknown nonlinearity kind {self.kind!r}")
        if min(self.L1, self.L2, self.M1) < 0.0:
            raise ConfigError("Lipschitz/bound constants must be >= 0")

    @property
    def is_linear(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "linear":
            return True
        if self.kind == "memory":
            return (
                self.params.get("f1_form", "linear") == "linear"
                and self.params.get("f2_form", "linear") == "linear"
            )
        return False

    def _pointwise(self, form: str, gain: float, x: FloatArray) -> FloatArray:
        if form == "linear":
            return gain * x
        if form == "saturating":
            return gain * x / (1.0 + np.linalg.norm(x))
        raise ConfigError(f"unknown pointwise form {form!r}")


@dataclass(frozen=True)
class ConstantsLedger:
    """All scalar constants the contraction inequality consumes."""

    M: float  # solution-operator bound over [0, T]
    M_B: float  # operator norm of the input map
    l_1: float  # impulse bound (on the unit ball for linear impulses)
    l_2: float  # impulse Lipschitz constant
    l_g: float  # nonlocal Lipschitz constant, sum of |c_i|
    K: int  # impulse count
    norm_L1: float  # L_{1/p} norm of L1 over [0, T]
    norm_L2: float
    norm_M1: float

    def __post_init__(self):
        if min(self.M, self.M_B, self.l_1, self.l_2, self.l_g) < 0 or self.K < 0:
            raise ConfigError("ledger constants must be non-negative")
        if min(self.norm_L1, self.norm_L2, self.norm_M1) < 0:
            raise ConfigError("ledger norms must be non-negative")


def _lp_norm_const(value: float, p: float, horizon: float) -> float:
    # L_{1/p} norm of a constant curve: (int_0^T c^{1/p} dt)^p = c * T^p
    if value == 0.0:
        return 0.0
    return value * horizon**p


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Immutable description of one truncated problem instance.

    Equality is identity: the ndarray fields make structural equality
    ill-defined, and one instance is meant to be shared per problem."""

    alpha: float
    omega: float
    n_modes: int
    horizon: float  # T
    delay: float  # r
    impulses: tuple[ImpulseDescriptor, ...]
    nonlocal_terms: tuple[NonlocalTerm, ...]
    phi: PhiDescriptor
    f_desc: NonlinearityDescriptor
    B: FloatArray
    constants: ConstantsLedger = field(init=False)

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise ConfigError(f"alpha must lie in (1, 2), got {self.alpha}")
        if self.omega < 0.0:
            raise ConfigError("omega must be >= 0")
        if self.n_modes < 1:
            raise ConfigError("N must be >= 1")
        if self.horizon <= 0.0:
            raise ConfigError("T must be > 0")
        if self.delay < 0.0:
            raise ConfigError("r must be >= 0")
        times = [imp.t for imp in self.impulses]
        if any(not (0.0 < t < self.horizon) for t in times):
            raise ConfigError("impulse times must lie strictly inside (0, T)")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ConfigError("impulse times must be strictly increasing")
        for term in self.nonlocal_terms:
            if not (0.0 <= term.tau <= self.horizon):
                raise ConfigError("nonlocal anchors must lie in [0, T]")
        if len(self.phi.coeffs) != self.n_modes:
            raise ConfigError("phi coefficient length must equal N")
        B = np.asarray(self.B, dtype=float)
        if B.shape != (self.n_modes, self.n_modes):
            raise ConfigError(f"B must be {self.n_modes}x{self.n_modes}")
        p = self.f_desc.holder_p
        if not (0.0 < p < self.alpha - 1.0):
            raise ConfigError(
                f"holder exponent p={p} must lie in (0, alpha-1)=(0, {self.alpha - 1})"
            )
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "constants", self._build_ledger())

    def _build_ledger(self) -> ConstantsLedger:
        p = self.f_desc.holder_p
        l_2 = max((imp.lipschitz for imp in self.impulses), default=0.0)
        return ConstantsLedger(
            M=self.operator_bound(),
            M_B=float(np.linalg.norm(self.B, 2)),
            l_1=l_2,  # linear impulses: bound on the unit ball equals the slope
            l_2=l_2,
            l_g=float(sum(abs(t.c) for t in self.nonlocal_terms)),
            K=len(self.impulses),
            norm_L1=_lp_norm_const(self.f_desc.L1, p, self.horizon),
            norm_L2=_lp_norm_const(self.f_desc.L2, p, self.horizon),
            norm_M1=_lp_norm_const(self.f_desc.M1, p, self.horizon),
        )

    @property
    def eigenvalues(self) -> FloatArray:
        n = np.arange(1, self.n_modes + 1, dtype=float)
        return -(n**2) - self.omega

    def operator_bound(self, grid_points: int = 65) -> float:
        """max over a t-grid and all modes of |E_{alpha,1}(lam_n t^alpha)|."""
        ts = np.linspace(0.0, self.horizon, grid_points)
        lam_worst = self.eigenvalues[np.argmax(np.abs(self.eigenvalues))]
        best = 1.0  # t = 0 gives exactly 1 on every mode
        for lam in (self.eigenvalues[0], lam_worst):
            for t in ts[1:]:
                best = max(best, abs(mittag_leffler(self.alpha, 1.0, lam * t**self.alpha)))
        return best

    def check_vector(self, x) -> FloatArray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_modes,):
            raise DomainError(f"state vector must have shape ({self.n_modes},)")
        return x


def eval_f(
    spec: ProblemSpec, t: float, x: FloatArray, hist: HistorySegment
) -> FloatArray:
    """Nonlinearity value f(t, x, x_t).

    The memory kind integrates h(t-s) f2(s, x(s)) over the trailing delay
    window by the composite trapezoid rule on the window's own sub-grid.
    """
    if not (0.0 <= t <= spec.horizon + 1e-12):
        raise DomainError(f"t={t} outside [0, T]")
    desc = spec.f_desc
    if desc.kind == "zero":
        return np.zeros(spec.n_modes)
    try:
        if desc.kind == "linear":
            return desc._pointwise("linear", float(desc.params.get("gain", 0.0)), x)
        # memory kind
        p = desc.params
        f1 = desc._pointwise(p.get("f1_form", "linear"), float(p.get("f1_gain", 0.0)), x)
        f2_gain = float(p.get("f2_gain", 0.0))
        if f2_gain == 0.0 or hist.values.shape[0] < 2:
            return f1
        rate = float(p.get("kernel_rate", 1.0))
        f2_form = p.get("f2_form", "linear")
        rows = np.stack(
            [desc._pointwise(f2_form, f2_gain, v) for v in hist.values]
        )
        kernel = np.exp(rate * hist.offsets)  # h(t - s) = exp(-rate (t - s))
        dt = hist.offsets[1] - hist.offsets[0]
        w = np.full(len(hist.offsets), dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return f1 + (w * kernel) @ rows
    except (ValueError, FloatingPointError) as exc:  # pragma: no cover
        raise NonlinearityError(str(exc), t) from exc


class _TrajectoryLike:
    """Anything exposing value_at_time(t); avoids an import cycle with the
    solver's Trajectory."""

    def value_at_time(self, t: float) -> FloatArray:  # pragma: no cover
        raise NotImplementedError


def eval_g(spec: ProblemSpec, traj, s: float) -> FloatArray:
    """Nonlocal map g(x)(s) = sum_i c_i x(tau_i + s) for s in [-r, 0].

    At an impulse node the trajectory value is the left limit, which is the
    value stored at the node.
    """
    if not (-spec.delay - 1e-12 <= s <= 1e-12):
        raise DomainError(f"offset s={s} outside [-r, 0]")
    out = np.zeros(spec.n_modes)
    for term in spec.nonlocal_terms:
        out += term.c * traj.value_at_time(term.tau + s)
    return out


def eval_impulse(spec: ProblemSpec, k: int, x_left: FloatArray) -> FloatArray:
    """Jump vector I_k(x(t_k^-)); k is a zero-based impulse index."""
    if not (0 <= k < len(spec.impulses)):
        raise DomainError(f"impulse index {k} out of range")
    return spec.impulses[k].apply(np.asarray(x_left, dtype=float))
