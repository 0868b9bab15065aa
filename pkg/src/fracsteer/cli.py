"""Command-line front end.

Subcommands: ml | solve | steer | sweep | optimize | check.  Every run writes
one JSON manifest alongside its outputs (or <subcommand>.manifest.json in the
working directory for stdout-only runs).  Outputs are written atomically via
a temp file and rename.  Exit codes: 0 success, 2 configuration error,
3 numerical non-convergence.

FRACSTEER_THREADS caps internal parallelism (currently the epsilon sweep).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_cost, load_problem, load_target
from .control import epsilon_sweep, steer
from .errors import ConfigError, ConvergenceError, EvaluationError, FracsteerError
from .mittag import MLQuery, ml_eval
from .optimal import ControlParameterization, MinimizeOptions, minimize
from .solver import Grid, contraction_check, solve_mild, ControlSignal

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _max_workers() -> int:
    raw = os.environ.get("FRACSTEER_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"FRACSTEER_THREADS={raw!r} is not an integer") from exc
    if n < 1:
        raise ConfigError("FRACSTEER_THREADS must be >= 1")
    return n


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class RunManifest:
    """One record per run: what ran, with which inputs, producing what."""

    def __init__(self, subcommand: str, args: argparse.Namespace):
        self.data = {
            "subcommand": subcommand,
            "tool_version": __version__,
            "config": getattr(args, "config", None),
            "seed": getattr(args, "seed", 0),
            "threads": _max_workers(),
            "parameters": {},
            "outputs": [],
            "duration_s": None,
        }
        self._t0 = time.monotonic()

    def param(self, **kwargs) -> None:
        self.data["parameters"].update(kwargs)

    def output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def write(self, args: argparse.Namespace) -> None:
        self.data["duration_s"] = round(time.monotonic() - self._t0, 6)
        if getattr(args, "manifest", None):
            path = Path(args.manifest)
        elif self.data["outputs"]:
            path = Path(self.data["outputs"][0] + ".manifest.json")
        else:
            path = Path(f"{self.data['subcommand']}.manifest.json")
        _atomic_write(path, json.dumps(self.data, indent=2) + "\n")


def _emit(args, text: str, manifest: RunManifest) -> None:
    out = getattr(args, "out", None)
    if out:
        _atomic_write(Path(out), text)
        manifest.output(out)
    else:
        sys.stdout.write(text)


def _cmd_ml(args) -> int:
    manifest = RunManifest("ml", args)
    if args.grid:
        try:
            lo, hi, steps = args.grid.split(",")
            zs = np.linspace(float(lo), float(hi), int(steps))
        except ValueError as exc:
            raise ConfigError(f"--grid must be from,to,steps: {exc}") from exc
    else:
        zs = [args.z]
    manifest.param(alpha=args.alpha, beta=args.beta, z=list(map(float, zs)))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["alpha", "beta", "z", "value"])
    for z in zs:
        val = ml_eval(MLQuery(args.alpha, args.beta, float(z)))
        writer.writerow([args.alpha, args.beta, float(z), repr(val)])
    _emit(args, buf.getvalue(), manifest)
    manifest.write(args)
    return EXIT_OK


def _trajectory_csv(traj) -> str:
    grid = traj.grid
    buf = io.StringIO()
    writer = csv.writer(buf)
    n = grid.spec.n_modes
    writer.writerow(["t"] + [f"mode_{i}" for i in range(1, n + 1)] + ["is_left_limit"])
    impulse_rows = {grid.fwd_row(m): m for m in grid.impulse_nodes}
    for row in range(len(grid)):
        t = grid.times[row]
        is_imp = row in impulse_rows
        writer.writerow([repr(float(t))] + [repr(v) for v in traj.values[row]] + [1 if is_imp else 0])
        if is_imp:
            right = traj.right_value(impulse_rows[row])
            writer.writerow([repr(float(t))] + [repr(v) for v in right] + [0])
    return buf.getvalue()


def _cmd_solve(args) -> int:
    manifest = RunManifest("solve", args)
    spec = load_problem(args.config)
    grid = Grid(spec, args.dt)
    u = ControlSignal.zeros(grid)
    traj = solve_mild(spec, u, tol=args.tol, max_iter=args.max_iter)
    manifest.param(dt=args.dt, tol=args.tol, picard_iters=len(traj.residuals),
                   warnings=traj.warnings)
    _emit(args, _trajectory_csv(traj), manifest)
    manifest.write(args)
    return EXIT_OK


def _cmd_steer(args) -> int:
    manifest = RunManifest("steer", args)
    spec = load_problem(args.config)
    grid = Grid(spec, args.dt)
    h = load_target(args.target, spec.n_modes)
    report, traj, u = steer(
        spec, grid, h, args.eps,
        tol=args.tol, max_outer=args.max_outer, theta=args.theta,
    )
    payload = report.as_dict()
    payload["terminal_state"] = [float(v) for v in traj.terminal()]
    manifest.param(dt=args.dt, eps=args.eps, tol=args.tol, theta=args.theta)
    _emit(args, json.dumps(payload, indent=2) + "\n", manifest)
    manifest.write(args)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    manifest = RunManifest("sweep", args)
    spec = load_problem(args.config)
    grid = Grid(spec, args.dt)
    h = load_target(args.target, spec.n_modes)
    try:
        eps_list = [float(tok) for tok in args.eps_list.split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"--eps-list must be comma-separated floats: {exc}") from exc
    result = epsilon_sweep(
        spec, grid, h, eps_list,
        tol=args.tol, max_outer=args.max_outer, theta=args.theta,
        max_workers=_max_workers(),
    )
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["eps", "terminal_error", "control_energy", "outer_iters"])
    for entry in result.entries:
        if entry.report is None:
            writer.writerow([entry.eps, "failed", "failed", entry.error])
        else:
            r = entry.report
            writer.writerow([r.eps, repr(r.terminal_error), repr(r.control_energy), r.outer_iters])
    manifest.param(
        dt=args.dt, eps_list=eps_list, tol=args.tol, theta=args.theta,
        errors_non_increasing=result.errors_non_increasing,
    )
    _emit(args, buf.getvalue(), manifest)
    manifest.write(args)
    failed = any(e.report is None for e in result.entries)
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_optimize(args) -> int:
    manifest = RunManifest("optimize", args)
    spec = load_problem(args.config)
    grid = Grid(spec, args.dt)
    cost = load_cost(args.cost)
    param = ControlParameterization.boxed(args.intervals, spec.n_modes, args.bound)
    opts = MinimizeOptions(step=args.step, max_evals=args.max_evals, fd_step=args.fd_step)
    result = minimize(spec, grid, cost, param, opts=opts)
    payload = {
        "J_opt": result.J_opt,
        "parameters": [[float(v) for v in row] for row in result.theta_opt],
        "history": result.history,
        "converged": result.converged,
        "n_evals": result.n_evals,
    }
    manifest.param(dt=args.dt, intervals=args.intervals, bound=args.bound,
                   converged=result.converged)
    _emit(args, json.dumps(payload, indent=2) + "\n", manifest)
    manifest.write(args)
    return EXIT_OK


def _cmd_check(args) -> int:
    manifest = RunManifest("check", args)
    spec = load_problem(args.config)
    factor = contraction_check(spec, args.eps)
    c = spec.constants
    lines = [
        f"contraction factor (eps={args.eps}): {factor!r}",
        f"  M={c.M!r} M_B={c.M_B!r} K={c.K} l_1={c.l_1!r} l_2={c.l_2!r} l_g={c.l_g!r}",
        f"  |L1|_1/p={c.norm_L1!r} |L2|_1/p={c.norm_L2!r} |M1|_1/p={c.norm_M1!r}",
        f"  contraction satisfied: {factor < 1.0}",
    ]
    manifest.param(eps=args.eps, factor=factor)
    _emit(args, "\n".join(lines) + "\n", manifest)
    manifest.write(args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracsteer",
        description="Fractional impulsive-delay steering and optimal-control toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand")

    def common(p, config=True, dt=True):
        if config:
            p.add_argument("--config", required=True, help="problem JSON file")
            if dt:
                p.add_argument("--dt", type=float, required=True, help="grid step")
        p.add_argument("--out", help="output file (stdout when omitted)")
        p.add_argument("--manifest", help="manifest path override")
        p.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")

    p = sub.add_parser("ml", help="evaluate the Mittag-Leffler kernel")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--z", type=float)
    p.add_argument("--grid", help="z sweep as from,to,steps")
    common(p, config=False)
    p.set_defaults(func=_cmd_ml)

    p = sub.add_parser("solve", help="solve the mild formulation for u = 0")
    common(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=400)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("steer", help="synthesize the regularized steering control")
    common(p)
    p.add_argument("--target", required=True, help="target state JSON file")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-outer", type=int, default=120)
    p.add_argument("--theta", type=float, default=1.0, help="outer damping in (0, 1]")
    p.set_defaults(func=_cmd_steer)

    p = sub.add_parser("sweep", help="steer across a decreasing list of eps")
    common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--eps-list", required=True, help="comma-separated, decreasing")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-outer", type=int, default=120)
    p.add_argument("--theta", type=float, default=1.0)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("optimize", help="minimize the performance index")
    common(p)
    p.add_argument("--cost", required=True, help="cost JSON file")
    p.add_argument("--intervals", type=int, required=True, help="control intervals P")
    p.add_argument("--bound", type=float, default=10.0, help="admissible box half-width")
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--max-evals", type=int, default=4000)
    p.add_argument("--fd-step", type=float, default=1e-5)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("check", help="print the contraction factor and constants")
    common(p, dt=False)
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=_cmd_check)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help/--version
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConvergenceError, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FracsteerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
