"""JSON configuration schema.

Problem file keys: alpha, omega, N, T, r, impulses:[{t,kind,scale}],
nonlocal:[{c,tau}], phi:{kind,params}, f:{kind,params,L1,L2,M1,p},
B:{kind,params}.  Unknown keys are rejected at every level.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import (
    ImpulseDescriptor,
    NonlinearityDescriptor,
    NonlocalTerm,
    PhiDescriptor,
    ProblemSpec,
)
from .optimal import CostDescriptor

_TOP_KEYS = {"alpha", "omega", "N", "T", "r", "impulses", "nonlocal", "phi", "f", "B"}


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"missing key {key!r} in {where}")
    return obj[key]


def _coeff_vector(raw, n: int, where: str) -> np.ndarray:
    if isinstance(raw, (int, float)):
        return np.full(n, float(raw))
    arr = np.asarray(raw, dtype=float)
    if arr.shape == (n,):
        return arr
    if arr.ndim == 1 and arr.size < n:
        out = np.zeros(n)
        out[: arr.size] = arr
        return out
    raise ConfigError(f"{where}: expected a scalar or a vector of length <= N={n}")


def _build_phi(raw: dict, n: int) -> PhiDescriptor:
    _reject_unknown(raw, {"kind", "params"}, "phi")
    kind = _require(raw, "kind", "phi")
    params = raw.get("params", {})
    if kind == "zero":
        _reject_unknown(params, set(), "phi.params")
        return PhiDescriptor("zero", np.zeros(n))
    if kind == "constant":
        _reject_unknown(params, {"coeffs"}, "phi.params")
        return PhiDescriptor("constant", _coeff_vector(_require(params, "coeffs", "phi.params"), n, "phi.coeffs"))
    if kind == "linear":
        _reject_unknown(params, {"coeffs", "slope"}, "phi.params")
        return PhiDescriptor(
            "linear",
            _coeff_vector(_require(params, "coeffs", "phi.params"), n, "phi.coeffs"),
            _coeff_vector(_require(params, "slope", "phi.params"), n, "phi.slope"),
        )
    raise ConfigError(f"unknown phi kind {kind!r}")


def _build_f(raw: dict) -> NonlinearityDescriptor:
    _reject_unknown(raw, {"kind", "params", "L1", "L2", "M1", "p"}, "f")
    kind = _require(raw, "kind", "f")
    params = dict(raw.get("params", {}))
    if kind == "zero":
        _reject_unknown(params, set(), "f.params")
    elif kind == "linear":
        _reject_unknown(params, {"gain"}, "f.params")
    elif kind == "memory":
        _reject_unknown(
            params, {"f1_gain", "f2_gain", "kernel_rate", "f1_form", "f2_form"}, "f.params"
        )
    else:
        raise ConfigError(f"unknown nonlinearity kind {kind!r}")
    return NonlinearityDescriptor(
        kind=kind,
        params=params,
        L1=float(raw.get("L1", 0.0)),
        L2=float(raw.get("L2", 0.0)),
        M1=float(raw.get("M1", 0.0)),
        holder_p=float(raw.get("p", 0.25)),
    )


def _build_B(raw: dict, n: int) -> np.ndarray:
    _reject_unknown(raw, {"kind", "params"}, "B")
    kind = _require(raw, "kind", "B")
    params = raw.get("params", {})
    if kind == "identity":
        _reject_unknown(params, set(), "B.params")
        return np.eye(n)
    if kind == "scale":
        _reject_unknown(params, {"value"}, "B.params")
        return float(_require(params, "value", "B.params")) * np.eye(n)
    if kind == "diag":
        _reject_unknown(params, {"entries"}, "B.params")
        entries = np.asarray(_require(params, "entries", "B.params"), dtype=float)
        if entries.shape != (n,):
            raise ConfigError(f"B.diag entries must have length N={n}")
        return np.diag(entries)
    if kind == "matrix":
        _reject_unknown(params, {"rows"}, "B.params")
        rows = np.asarray(_require(params, "rows", "B.params"), dtype=float)
        if rows.shape != (n, n):
            raise ConfigError(f"B.matrix rows must be {n}x{n}")
        return rows
    raise ConfigError(f"unknown B kind {kind!r}")


def problem_from_dict(raw: dict) -> ProblemSpec:
    if not isinstance(raw, dict):
        raise ConfigError("problem config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "problem config")
    n = int(_require(raw, "N", "problem config"))
    impulses = []
    for i, item in enumerate(raw.get("impulses", [])):
        _reject_unknown(item, {"t", "kind", "scale"}, f"impulses[{i}]")
        impulses.append(
            ImpulseDescriptor(
                t=float(_require(item, "t", f"impulses[{i}]")),
                kind=item.get("kind", "linear"),
                scale=float(_require(item, "scale", f"impulses[{i}]")),
            )
        )
    terms = []
    for i, item in enumerate(raw.get("nonlocal", [])):
        _reject_unknown(item, {"c", "tau"}, f"nonlocal[{i}]")
        terms.append(
            NonlocalTerm(
                c=float(_require(item, "c", f"nonlocal[{i}]")),
                tau=float(_require(item, "tau", f"nonlocal[{i}]")),
            )
        )
    return ProblemSpec(
        alpha=float(_require(raw, "alpha", "problem config")),
        omega=float(raw.get("omega", 0.0)),
        n_modes=n,
        horizon=float(_require(raw, "T", "problem config")),
        delay=float(raw.get("r", 0.0)),
        impulses=tuple(impulses),
        nonlocal_terms=tuple(terms),
        phi=_build_phi(_require(raw, "phi", "problem config"), n),
        f_desc=_build_f(_require(raw, "f", "problem config")),
        B=_build_B(raw.get("B", {"kind": "identity"}), n),
    )


def load_problem(path) -> ProblemSpec:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return problem_from_dict(raw)


def load_target(path, n: int) -> np.ndarray:
    """Target state file: {"coeffs": [...]} (short vectors are zero-padded)."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read target {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("target file must be a JSON object")
    _reject_unknown(raw, {"coeffs"}, "target file")
    return _coeff_vector(_require(raw, "coeffs", "target file"), n, "target coeffs")


def cost_from_dict(raw: dict) -> CostDescriptor:
    _reject_unknown(raw, {"kind", "weights", "coercivity"}, "cost config")
    kind = raw.get("kind", "quadratic")
    if kind != "quadratic":
        raise ConfigError(f"unknown cost kind {kind!r}")
    weights = raw.get("weights", {})
    _reject_unknown(weights, {"state", "history", "control"}, "cost.weights")
    coerc = raw.get("coercivity", {})
    _reject_unknown(coerc, {"d", "e", "f"}, "cost.coercivity")
    return CostDescriptor(
        w_state=float(weights.get("state", 1.0)),
        w_hist=float(weights.get("history", 1.0)),
        w_control=float(weights.get("control", 1.0)),
        d=float(coerc.get("d", 0.0)),
        e=float(coerc.get("e", 0.0)),
        f_u=float(coerc.get("f", 1.0)),
    )


def load_cost(path) -> CostDescriptor:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read cost config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return cost_from_dict(raw)
