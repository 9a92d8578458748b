"""Slice sweeps of point solves, zero-level extraction, and the scaling harness."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _loop
from .core import ConfigError, ControlProblem, GameProblem, PdhgConfig, make_time_grid
from .pdhg_dg import hopf_dg_scheme, lax_dg_scheme
from .pdhg_oc import hopf_scheme, lax_scheme

__all__ = [
    "SliceGrid",
    "SliceResult",
    "SOLVERS",
    "node_seed",
    "build_scheme",
    "eval_points",
    "eval_slice",
    "extract_zero_level",
    "sample_segments",
    "hausdorff",
    "containment_gap",
    "ScalingResult",
    "fit_scaling",
    "scaling_run",
    "fmt",
    "write_field_csv",
    "read_field_csv",
    "write_contour_csv",
    "read_contour_csv",
    "write_scaling_csv",
    "write_trajectory_csv",
]

SOLVERS = ("lax-oc", "hopf-oc", "lax-dg", "hopf-dg")
CHUNK = 1024


def _axis(lo, hi, mesh):
    n = int(np.floor((hi - lo) / mesh + 1e-9)) + 1
    return lo + mesh * np.arange(n)


@dataclass(frozen=True)
class SliceGrid:
    """Nodes ``base + a e_{axis_a} + b e_{axis_b}`` on a rectangle of the ``(a, b)`` plane."""

    base: tuple
    axis_a: int
    axis_b: int
    range_a: tuple
    range_b: tuple
    mesh: float

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        d = len(self.base)
        if self.axis_a == self.axis_b:
            raise ConfigError("slice axes must differ")
        if not (0 <= self.axis_a < d and 0 <= self.axis_b < d):
            raise ConfigError(f"slice axes must lie in [0, {d})")
        if not self.mesh > 0:
            raise ConfigError("mesh must be positive")
        for lo, hi in (self.range_a, self.range_b):
            if hi < lo:
                raise ConfigError("ranges must be increasing")

    @classmethod
    def square(cls, dim: int, half_width: float, mesh: float, axes=(0, 1), base=None):
        base = tuple(np.zeros(dim)) if base is None else base
        r = (-half_width, half_width)
        return cls(base, axes[0], axes[1], r, r, mesh)

    @property
    def dim(self) -> int:
        return len(self.base)

    @property
    def a_values(self) -> np.ndarray:
        return _axis(self.range_a[0], self.range_a[1], self.mesh)

    @property
    def b_values(self) -> np.ndarray:
        return _axis(self.range_b[0], self.range_b[1], self.mesh)

    @property
    def shape(self) -> tuple:
        return (len(self.a_values), len(self.b_values))

    def points(self) -> np.ndarray:
        """Array ``(na, nb, dim)`` of node coordinates."""
        A, B = np.meshgrid(self.a_values, self.b_values, indexing="ij")
        pts = np.broadcast_to(np.asarray(self.base), A.shape + (self.dim,)).copy()
        pts[..., self.axis_a] = A
        pts[..., self.axis_b] = B
        return pts


@dataclass
class SliceResult:
    times: np.ndarray
    a_values: np.ndarray
    b_values: np.ndarray
    values: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    stop_reason: np.ndarray
    seconds_per_point: float
    failed: list = field(default_factory=list)

    def convergence_rate(self, ti: Optional[int] = None, accept=("tol",)) -> float:
        sr = self.stop_reason if ti is None else self.stop_reason[ti]
        return float(np.isin(sr, list(accept)).mean())


def node_seed(base_seed: int, i: int, j: int, ti: int) -> int:
    """Per-node seed derived from ``(base_seed, i, j, time index)`` only."""
    return int(np.random.SeedSequence([int(base_seed), int(i), int(j), int(ti)]).generate_state(1)[0])


def build_scheme(problem, solver: str, t: float, cfg: PdhgConfig):
    if solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {solver!r}")
    game = isinstance(problem, GameProblem)
    if game != solver.endswith("-dg"):
        raise ConfigError(f"solver {solver!r} does not match problem type {type(problem).__name__}")
    kind = "lax" if solver.startswith("lax") else "hopf"
    grid = make_time_grid(t, cfg.delta, kind)
    return {"lax-oc": lax_scheme, "hopf-oc": hopf_scheme,
            "lax-dg": lax_dg_scheme, "hopf-dg": hopf_dg_scheme}[solver](problem, grid, cfg)


def eval_points(problem, solver: str, points, t: float, cfg: PdhgConfig, seeds=None,
                sigma_rule: Optional[Callable] = None, threads: int = 1, chunk: int = CHUNK,
                keep_trajectory: bool = False) -> list:
    """Independent solves at each row of ``points``; one report per row.

    Work is cut into fixed chunks of ``chunk`` points, so results do not
    depend on ``threads``.  Sign-flip problems report the negated value.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != problem.dim:
        raise ConfigError(f"points have dimension {points.shape[1]}, problem has {problem.dim}")
    n = len(points)
    seeds = [cfg.seed] * n if seeds is None else list(seeds)
    if sigma_rule is None:
        sig = np.full(n, float(cfg.sigma))
    else:
        sig = np.array([float(sigma_rule(pt, t)) for pt in points])
    tau = cfg.sigma * cfg.tau / sig
    scheme = build_scheme(problem, solver, t, cfg)
    parts = [(k, min(k + chunk, n)) for k in range(0, n, chunk)]

    def run(part):
        lo, hi = part
        return _loop.solve_points(scheme, points[lo:hi], cfg, seeds[lo:hi], sig[lo:hi], tau[lo:hi],
                                  keep_trajectory=keep_trajectory)

    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            chunks = list(ex.map(run, parts))
    else:
        chunks = [run(p) for p in parts]
    reports = [r for c in chunks for r in c]
    if isinstance(problem, ControlProblem) and problem.negate:
        for r in reports:
            r.fval = -r.fval
    return reports


def eval_slice(problem, solver: str, grid: SliceGrid, times: Sequence[float], cfg: PdhgConfig,
               sigma_rule: Optional[Callable] = None, threads: int = 1, chunk: int = CHUNK) -> SliceResult:
    """Value field on ``grid`` for each time; per-node seeds from :func:`node_seed`."""
    if grid.dim != problem.dim:
        raise ConfigError(f"slice has dimension {grid.dim}, problem has {problem.dim}")
    pts = grid.points()
    na, nb = grid.shape
    flat = pts.reshape(-1, grid.dim)
    times = np.asarray(times, dtype=float)
    shape = (len(times), na, nb)
    values = np.full(shape, np.nan)
    iters = np.zeros(shape, dtype=np.int64)
    conv = np.zeros(shape, dtype=bool)
    reason = np.empty(shape, dtype=object)
    failed = []
    t0 = time.perf_counter()
    for ti, t in enumerate(times):
        seeds = [node_seed(cfg.seed, i, j, ti) for i in range(na) for j in range(nb)]
        reps = eval_points(problem, solver, flat, float(t), cfg, seeds, sigma_rule, threads, chunk)
        for k, r in enumerate(reps):
            i, j = divmod(k, nb)
            values[ti, i, j] = r.fval
            iters[ti, i, j] = r.total_iterations
            conv[ti, i, j] = r.converged
            reason[ti, i, j] = r.stop_reason
            if r.stop_reason == "diverged":
                failed.append((float(t), i, j))
    elapsed = time.perf_counter() - t0
    return SliceResult(times, grid.a_values, grid.b_values, values, iters, conv, reason,
                       elapsed / max(values.size, 1), failed)


# ---------------------------------------------------------------- contours

def extract_zero_level(field, xs, ys, level: float = 0.0) -> list:
    """Marching squares on ``field[i, j]`` at ``(xs[i], ys[j])``.

    Returns segments ``((ax, ay), (bx, by))``.  A node is "above" when its
    value exceeds ``level``; ambiguous cells use the mean of their corners.
    """
    f = np.asarray(field, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if f.ndim != 2 or f.shape != (len(xs), len(ys)):
        raise ConfigError("field must be 2-D with shape (len(xs), len(ys))")
    if f.shape[0] < 2 or f.shape[1] < 2:
        return []
    up = f > level
    c00, c10, c01, c11 = up[:-1, :-1], up[1:, :-1], up[:-1, 1:], up[1:, 1:]
    mixed = (c00 != c10) | (c00 != c01) | (c00 != c11)
    segs = []

    def cross(pa, pb, va, vb):
        s = (level - va) / (vb - va)
        return (pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1]))

    for i, j in zip(*np.nonzero(mixed)):
        p = {"00": (xs[i], ys[j]), "10": (xs[i + 1], ys[j]), "01": (xs[i], ys[j + 1]), "11": (xs[i + 1], ys[j + 1])}
        v = {"00": f[i, j], "10": f[i + 1, j], "01": f[i, j + 1], "11": f[i + 1, j + 1]}
        u = {k: val > level for k, val in v.items()}
        edges = {"b": ("00", "10"), "r": ("10", "11"), "t": ("01", "11"), "l": ("00", "01")}
        pts = {e: cross(p[a], p[b], v[a], v[b]) for e, (a, b) in edges.items() if u[a] != u[b]}
        if len(pts) == 2:
            a, b = pts.values()
            segs.append((a, b))
        elif len(pts) == 4:
            centre_up = np.mean(list(v.values())) > level
            if centre_up == u["00"]:
                segs.append((pts["b"], pts["r"]))
                segs.append((pts["l"], pts["t"]))
            else:
                segs.append((pts["l"], pts["b"]))
                segs.append((pts["r"], pts["t"]))
    return [((float(a[0]), float(a[1])), (float(b[0]), float(b[1]))) for a, b in segs]


def sample_segments(segs, spacing: float = 0.005) -> np.ndarray:
    """Points along each segment, at most ``spacing`` apart, endpoints included."""
    out = []
    for (ax, ay), (bx, by) in segs:
        L = np.hypot(bx - ax, by - ay)
        k = max(int(np.ceil(L / spacing)), 1)
        s = np.linspace(0.0, 1.0, k + 1)[:, None]
        out.append(np.array([ax, ay]) + s * np.array([bx - ax, by - ay]))
    return np.concatenate(out) if out else np.zeros((0, 2))


def hausdorff(segs_a, segs_b, spacing: float = 0.005, exclude: Optional[Callable] = None) -> float:
    """Symmetric Hausdorff distance between two segment sets.

    ``exclude(points) -> bool mask`` drops sample points from both sets
    before measuring.  Two empty sets are at distance 0; one empty set gives
    ``inf``.
    """
    pa = sample_segments(segs_a, spacing)
    pb = sample_segments(segs_b, spacing)
    if exclude is not None:
        pa = pa[~exclude(pa)] if len(pa) else pa
        pb = pb[~exclude(pb)] if len(pb) else pb
    if len(pa) == 0 and len(pb) == 0:
        return 0.0
    if len(pa) == 0 or len(pb) == 0:
        return float("inf")
    da = cKDTree(pb).query(pa)[0].max()
    db = cKDTree(pa).query(pb)[0].max()
    return float(max(da, db))


def containment_gap(inner, outer, xs, ys, level: float = 0.0) -> float:
    """How far ``{inner <= level}`` sticks out of ``{outer <= level}``.

    Max over nodes in the first set but not the second of the distance to
    the nearest node of the second set; 0 when contained.
    """
    X = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    a = np.asarray(inner) <= level
    b = np.asarray(outer) <= level
    out = a & ~b
    if not out.any():
        return 0.0
    if not b.any():
        return float("inf")
    return float(cKDTree(X[b]).query(X[out])[0].max())


# ---------------------------------------------------------------- scaling

@dataclass
class ScalingResult:
    """Median/mean seconds per dimension with least-squares fits.

    ``linear = (slope, intercept)``; ``quadratic = (c2, c1, c0)`` for
    ``c2 d^2 + c1 d + c0``.  Fits that need more dimensions than were run
    are ``nan`` and flagged in ``degenerate``.
    """

    dims: np.ndarray
    medians: np.ndarray
    means: np.ndarray
    linear: tuple
    quadratic: tuple
    r2_linear: float
    degenerate: bool
    raw: np.ndarray


def fit_scaling(dims, seconds):
    d = np.asarray(dims, dtype=float)
    y = np.asarray(seconds, dtype=float)
    nan = float("nan")
    lin = (nan, nan)
    quad = (nan, nan, nan)
    r2 = nan
    if len(np.unique(d)) >= 2:
        lin = tuple(float(c) for c in np.polyfit(d, y, 1))
        resid = y - np.polyval(lin, d)
        ss = ((y - y.mean()) ** 2).sum()
        r2 = float(1.0 - (resid ** 2).sum() / ss) if ss > 0 else 1.0
    if len(np.unique(d)) >= 3:
        quad = tuple(float(c) for c in np.polyfit(d, y, 2))
    return lin, quad, r2, len(np.unique(d)) < 3


def scaling_run(family: Callable, dims: Sequence[int], point_rule: Callable, t: float, cfg: PdhgConfig,
                repeats: int = 5, solver: str = "lax-oc", sigma_rule: Optional[Callable] = None,
                warmup: bool = True) -> ScalingResult:
    """Time one point solve per dimension.

    ``family(d)`` builds the problem and ``point_rule(d)`` the point.  Each
    dimension gets one untimed warm-up solve, then ``repeats`` timed ones
    (monotonic clock).
    """
    dims = [int(d) for d in dims]
    if any(b <= a for a, b in zip(dims, dims[1:])):
        raise ConfigError("dims must be strictly ascending")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    raw = np.zeros((len(dims), repeats))
    for k, d in enumerate(dims):
        problem = family(d)
        pt = np.asarray(point_rule(d), dtype=float)
        if warmup:
            eval_points(problem, solver, pt, t, cfg, sigma_rule=sigma_rule)
        for r in range(repeats):
            t0 = time.perf_counter()
            eval_points(problem, solver, pt, t, cfg, sigma_rule=sigma_rule)
            raw[k, r] = time.perf_counter() - t0
    med = np.median(raw, axis=1)
    lin, quad, r2, degen = fit_scaling(dims, med)
    return ScalingResult(np.asarray(dims), med, raw.mean(axis=1), lin, quad, r2, degen, raw)


# ---------------------------------------------------------------- CSV

def fmt(v) -> str:
    """Round-trip float text (17 significant digits)."""
    return format(float(v), ".17g")


FIELD_HEADER = ["t", "a", "b", "value", "iterations", "converged", "stop_reason"]
CONTOUR_HEADER = ["t", "segment", "ax", "ay", "bx", "by"]
SCALING_HEADER = ["dim", "median_seconds", "mean_seconds", "fit_linear_a", "fit_linear_b",
                  "fit_quad_a", "fit_quad_b", "r2_linear"]


def write_field_csv(path, times, a_values, b_values, values, iterations=None, converged=None, stop_reason=None):
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_HEADER)
        for ti, t in enumerate(times):
            for i, a in enumerate(a_values):
                for j, b in enumerate(b_values):
                    it = 0 if iterations is None else int(iterations[ti, i, j])
                    cv = True if converged is None else bool(converged[ti, i, j])
                    sr = "" if stop_reason is None else str(stop_reason[ti, i, j])
                    w.writerow([fmt(t), fmt(a), fmt(b), fmt(values[ti, i, j]), it, int(cv), sr])


def read_field_csv(path):
    """Returns ``(times, a_values, b_values, values)`` with ``values[t, a, b]``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty field file")
    ts = sorted({float(r["t"]) for r in rows})
    av = sorted({float(r["a"]) for r in rows})
    bv = sorted({float(r["b"]) for r in rows})
    ti = {v: k for k, v in enumerate(ts)}
    ai = {v: k for k, v in enumerate(av)}
    bi = {v: k for k, v in enumerate(bv)}
    vals = np.full((len(ts), len(av), len(bv)), np.nan)
    for r in rows:
        vals[ti[float(r["t"])], ai[float(r["a"])], bi[float(r["b"])]] = float(r["value"])
    return np.array(ts), np.array(av), np.array(bv), vals


def write_contour_csv(path, contours):
    """``contours`` is a list of ``(t, segments)`` pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONTOUR_HEADER)
        for t, segs in contours:
            for k, ((ax, ay), (bx, by)) in enumerate(segs):
                w.writerow([fmt(t), k, fmt(ax), fmt(ay), fmt(bx), fmt(by)])


def read_contour_csv(path):
    """Returns ``{t: [segment, ...]}``."""
    out = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(float(r["t"]), []).append(
                ((float(r["ax"]), float(r["ay"])), (float(r["bx"]), float(r["by"]))))
    return out


def write_scaling_csv(path, res: ScalingResult):
    """One row per dimension; the fit columns repeat on every row.

    ``fit_linear_a``/``fit_linear_b`` are slope/intercept of the linear fit,
    ``fit_quad_a``/``fit_quad_b`` the ``d^2`` and ``d`` coefficients of the
    quadratic fit.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCALING_HEADER)
        for d, med, mean in zip(res.dims, res.medians, res.means):
            w.writerow([int(d), fmt(med), fmt(mean), fmt(res.linear[0]), fmt(res.linear[1]),
                        fmt(res.quadratic[0]), fmt(res.quadratic[1]), fmt(res.r2_linear)])


def write_trajectory_csv(path, times, blocks, names):
    """Columns ``t`` then ``<name><k>`` for each block, e.g. ``x1..xd, p1..pd``."""
    header = ["t"] + [f"{nm}{k + 1}" for nm, b in zip(names, blocks) for k in range(b.shape[-1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r, t in enumerate(times):
            w.writerow([fmt(t)] + [fmt(v) for b in blocks for v in b[r]])
