"""Command-line entry point: ``hjpdhg <command> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 non-convergence
under ``--strict``.
"""

from __future__ import annotations

import argparse
import re
import sys
from typing import Optional, Sequence

import numpy as np
import yaml

from .core import TAU_BUDGET, ConfigError, DivergenceError, GameProblem, PdhgConfig
from .grid_eval import (
    SliceGrid,
    eval_points,
    eval_slice,
    extract_zero_level,
    fmt,
    hausdorff,
    read_field_csv,
    scaling_run,
    write_contour_csv,
    write_field_csv,
    write_scaling_csv,
    write_trajectory_csv,
)
from .pdhg_oc import hopf_to_lax_bundle
from .problems import get_problem
from .reference import lax_friedrichs_2d

CONFIG_KEYS = ("sigma", "tau", "theta", "delta", "tol", "max_count", "seed", "init_radius",
               "sigma_bump", "restart_policy", "max_restarts", "value_tol")

# trajectory runs use a coarser step and their own step sizes
TRAJ_DEFAULTS = {"quadcopter": {"delta": 0.05, "sigma": 11.0, "tau": 0.24 / 11.0, "max_count": 200_000}}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        # let "--range -1,1" and "--point -0.5,2" through as values
        self._negative_number_matcher = re.compile(r"^-(\d|\.\d)[\d.,eE+-]*$")

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def load_config_file(path: str) -> dict:
    """Flat YAML mapping restricted to :data:`CONFIG_KEYS`."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping of keys to values")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys {unknown}; allowed: {list(CONFIG_KEYS)}")
    for k, v in data.items():
        if isinstance(v, (dict, list)):
            raise UsageError(f"config key {k!r} must be a scalar")
    return data


def resolve_config(base: PdhgConfig, file_values: dict, flag_values: dict, extra: Optional[dict] = None):
    """Registry defaults, then ``extra``, then the config file, then flags.

    Returns ``(cfg, sigma_explicit)``.  When sigma changes but tau is not
    given at the same level, tau follows as ``0.25(1 - 1e-6) / sigma``.
    """
    merged = {}
    sigma_explicit = False
    for layer in (extra or {}, file_values, {k: v for k, v in flag_values.items() if v is not None}):
        if "sigma" in layer:
            sigma_explicit = True
            if "tau" not in layer:
                merged["tau"] = TAU_BUDGET / float(layer["sigma"])
        merged.update(layer)
    try:
        cfg = base.replace(**merged)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    return cfg, sigma_explicit


def _add_common(p, point_flag=None):
    p.add_argument("--problem", required=True, help="registry name")
    p.add_argument("--config", help="YAML file with solver settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--max-count", dest="max_count", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--dim", type=int, help="state dimension for dimension-generic problems")
    p.add_argument("--solver", choices=("lax", "hopf"), help="override the registry solver")


def _setup(args, extra=None):
    entry = get_problem(args.problem)
    problem = entry.build(args.dim)
    file_values = load_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k, None) for k in ("seed", "sigma", "tau", "delta", "max_count", "tol")}
    cfg, explicit = resolve_config(entry.config, file_values, flags, extra)
    solver = entry.solver
    if args.solver:
        solver = f"{args.solver}-{'dg' if isinstance(problem, GameProblem) else 'oc'}"
    rule = None if explicit else entry.sigma_rule
    return entry, problem, cfg, solver, rule


def _check_point(problem, pt):
    if len(pt) != problem.dim:
        raise UsageError(f"point has {len(pt)} coordinates, problem {problem.name!r} has dimension {problem.dim}")
    return np.asarray(pt, dtype=float)


def cmd_solve(args) -> int:
    _, problem, cfg, solver, rule = _setup(args)
    pt = _check_point(problem, _floats(args.point))
    rep = eval_points(problem, solver, pt, args.time, cfg, sigma_rule=rule)[0]
    if rep.stop_reason == "diverged":
        raise DivergenceError(rep.iterations)
    print(f"fval {fmt(rep.fval)}")
    print(f"iterations {rep.total_iterations}")
    print(f"stop_reason {rep.stop_reason}")
    print(f"converged {str(rep.converged).lower()}")
    return 2 if args.strict and not rep.converged else 0


def _slice(args, problem):
    axes = _ints(args.axes)
    if len(axes) != 2:
        raise UsageError("--axes needs two indices")
    lo, hi = _floats(args.range)
    base = _floats(args.base) if args.base else [0.0] * problem.dim
    _check_point(problem, base)
    rb = (lo, hi) if args.range_b is None else tuple(_floats(args.range_b))
    return SliceGrid(tuple(base), axes[0], axes[1], (lo, hi), rb, args.mesh)


def cmd_grid(args) -> int:
    _, problem, cfg, solver, rule = _setup(args)
    grid = _slice(args, problem)
    times = _floats(args.times)
    res = eval_slice(problem, solver, grid, times, cfg, sigma_rule=rule, threads=args.threads)
    write_field_csv(args.out, res.times, res.a_values, res.b_values, res.values,
                    res.iterations, res.converged, res.stop_reason)
    print(f"points {res.values.size} converged {int(res.converged.sum())} "
          f"failed {len(res.failed)} seconds_per_point {res.seconds_per_point:.6g}")
    return 2 if args.strict and not res.converged.all() else 0


def cmd_contour(args) -> int:
    times, av, bv, vals = read_field_csv(args.inp)
    contours = [(t, extract_zero_level(vals[k], av, bv, args.level)) for k, t in enumerate(times)]
    write_contour_csv(args.out, contours)
    print(f"segments {sum(len(s) for _, s in contours)}")
    return 0


def cmd_traj(args) -> int:
    extra = TRAJ_DEFAULTS.get(args.problem, {})
    _, problem, cfg, solver, _ = _setup(args, extra)
    pt = _check_point(problem, _floats(args.target))
    rep = eval_points(problem, solver, pt, args.time, cfg, keep_trajectory=True)[0]
    if rep.stop_reason == "diverged":
        raise DivergenceError(rep.iterations)
    b = rep.trajectory
    if solver == "hopf-oc":
        b = hopf_to_lax_bundle(problem, b)
    if isinstance(problem, GameProblem):
        blocks, names = [b.x, b.y, b.p, b.q], ["x", "y", "p", "q"]
    else:
        blocks, names = [b.x, b.p], ["x", "p"]
    write_trajectory_csv(args.out, b.grid.nodes, blocks, names)
    print(f"fval {fmt(rep.fval)}")
    print(f"rows {len(b.grid.nodes)} iterations {rep.total_iterations} stop_reason {rep.stop_reason}")
    return 2 if args.strict and not rep.converged else 0


def default_scaling_point(d: int) -> np.ndarray:
    pt = np.zeros(d)
    pt[0] = -1.0
    pt[1 % d] = 1.0
    return pt


def cmd_scale(args) -> int:
    entry, problem, cfg, solver, rule = _setup(args)
    if entry.dims_fixed:
        raise UsageError(f"problem {args.problem!r} has a fixed dimension")
    dims = _ints(args.dims)
    res = scaling_run(entry.make, dims, default_scaling_point, args.time, cfg,
                      repeats=args.repeats, solver=solver, sigma_rule=rule)
    write_scaling_csv(args.out, res)
    print(f"r2_linear {fmt(res.r2_linear)} slope {fmt(res.linear[0])} intercept {fmt(res.linear[1])}"
          + (" (quadratic fit degenerate)" if res.degenerate else ""))
    return 0


def cmd_lf(args) -> int:
    _, problem, _, _, _ = _setup(args)
    if problem.dim != 2:
        raise UsageError("the Lax-Friedrichs reference is two-dimensional")
    lo, hi = _floats(args.range)
    times = _floats(args.times)
    res = lax_friedrichs_2d(problem.pde_hamiltonian, problem.pde_initial, (lo, hi, lo, hi), args.mesh,
                            times, cfl=args.cfl)
    write_field_csv(args.out, res.times, res.xs, res.ys, res.values)
    print(f"alpha {fmt(res.alpha[0])},{fmt(res.alpha[1])} dt {fmt(res.dt)}")
    if args.diff:
        ft, fa, fb, fv = read_field_csv(args.diff)
        for k, t in enumerate(ft):
            match = np.nonzero(np.isclose(res.times, t))[0]
            if not match.size:
                print(f"t {fmt(t)} missing from the reference run")
                continue
            lfk = res.values[match[0]]
            ia = np.round((fa - res.xs[0]) / args.mesh).astype(int)
            ib = np.round((fb - res.ys[0]) / args.mesh).astype(int)
            ok_a = (ia >= 0) & (ia < len(res.xs)) & np.isclose(res.xs[np.clip(ia, 0, len(res.xs) - 1)], fa)
            ok_b = (ib >= 0) & (ib < len(res.ys)) & np.isclose(res.ys[np.clip(ib, 0, len(res.ys) - 1)], fb)
            sub = lfk[np.ix_(ia[ok_a], ib[ok_b])]
            diff = np.abs(fv[k][np.ix_(ok_a, ok_b)] - sub)
            h = hausdorff(extract_zero_level(fv[k], fa, fb), extract_zero_level(lfk, res.xs, res.ys))
            print(f"t {fmt(t)} max_abs_diff {fmt(np.nanmax(diff)) if diff.size else 'nan'} hausdorff {fmt(h)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hjpdhg", description="Hamilton-Jacobi values and trajectories by primal-dual splitting.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="value at one space-time point")
    _add_common(p)
    p.add_argument("--point", required=True, help="comma-separated coordinates (x then y for games)")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--strict", action="store_true", help="exit 2 unless converged")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("grid", help="value field on a 2-D slice, written as CSV")
    _add_common(p)
    p.add_argument("--times", required=True)
    p.add_argument("--range", default="-3,3", help="lo,hi for both axes")
    p.add_argument("--range-b", dest="range_b", help="lo,hi for the second axis")
    p.add_argument("--mesh", type=float, default=0.1)
    p.add_argument("--axes", default="0,1")
    p.add_argument("--base", help="base point of the slice (default origin)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("contour", help="zero-level segments of a field CSV")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--level", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_contour)

    p = sub.add_parser("traj", help="trajectory bundle at one point, written as CSV")
    _add_common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_traj)

    p = sub.add_parser("scale", help="runtime against dimension")
    _add_common(p)
    p.add_argument("--dims", required=True)
    p.add_argument("--time", type=float, default=0.2)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("lf", help="Lax-Friedrichs reference field (2-D problems)")
    _add_common(p)
    p.add_argument("--times", required=True)
    p.add_argument("--range", default="-3,3")
    p.add_argument("--mesh", type=float, default=0.05)
    p.add_argument("--cfl", type=float, default=0.45)
    p.add_argument("--diff", help="PDHG field CSV to compare against")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lf)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, DivergenceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
