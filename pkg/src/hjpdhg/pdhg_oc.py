"""Optimal-control solvers on the discretized Lax and Hopf objectives."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _loop
from .core import (
    ConfigError,
    ControlProblem,
    Ctx,
    PdhgConfig,
    SolveReport,
    TimeGrid,
    TrajectoryBundle,
    make_time_grid,
    random_init,
)
from .operators import apply_D_hopf, apply_D_lax, apply_Dt_hopf, apply_Dt_lax

__all__ = [
    "lax_scheme",
    "hopf_scheme",
    "solve_lax_oc",
    "solve_hopf_oc",
    "fval_lax_oc",
    "fval_hopf_oc",
    "fval_lax_oc_forward",
    "fval_lax_oc_average",
    "KKTResidual",
    "kkt_residual_oc",
    "hopf_to_lax_bundle",
]


def _check_target(problem, target):
    target = np.asarray(target, dtype=float)
    if target.shape != (problem.dim,):
        raise ConfigError(f"target has shape {target.shape}, problem dimension is {problem.dim}")
    return target


def _check_shape(bundle, rows, dim):
    for name in ("x", "p"):
        a = getattr(bundle, name)
        if a is None or a.shape[-2:] != (rows, dim):
            raise ValueError(f"bundle.{name} has shape {None if a is None else a.shape}, expected (..., {rows}, {dim})")


# ---------------------------------------------------------------- Lax

def _lax_fval_arrays(problem: ControlProblem, x, p, s, delta):
    g0 = problem.initial_data.g(x[..., 0, :])
    lin = (p[..., 1:, :] * (x[..., 1:, :] - x[..., :-1, :])).sum(axis=-1).sum(axis=-1)
    ham = problem.hamiltonian(x[..., 1:, :], p[..., 1:, :], s[1:]).sum(axis=-1)
    return g0 + lin - delta * ham


def lax_scheme(problem: ControlProblem, grid: TimeGrid, cfg: PdhgConfig) -> _loop.Scheme:
    """Lax objective with backward Euler; rows ``0..N`` with ``p_0 = 0``."""
    if grid.scheme != "lax":
        raise ConfigError("lax_scheme needs a lax time grid")
    s = grid.nodes
    delta = grid.delta
    n = grid.n_steps
    theta = cfg.theta
    data = problem.initial_data
    lagged = cfg.variant == "lagged"

    def step(st, sig, tau):
        x, p, z = st["x"], st["p"], st["z"]
        v = p + sig[..., None] * apply_D_lax(z)
        pn = np.empty_like(p)
        pn[:, 0] = 0.0
        pn[:, 1:] = problem.p_update(v[:, 1:], p[:, 1:], Ctx(x=x[:, 1:], s=s[1:]), sig * delta)
        u = x - tau[..., None] * apply_Dt_lax(p if lagged else pn)
        xn = np.empty_like(x)
        xn[:, 0] = data.step(u[:, 0], x[:, 0], tau)
        xn[:, 1:n] = problem.x_update(u[:, 1:n], x[:, 1:n], Ctx(p=pn[:, 1:n], s=s[1:n]), tau * delta)
        xn[:, n] = x[:, n]
        zn = xn + theta * (xn - x)
        return {"x": xn, "p": pn, "z": zn}

    def fval(st):
        return _lax_fval_arrays(problem, st["x"], st["p"], s, delta)

    def init(target, rng, c):
        b = random_init(problem.dim, target, c, "lax", n_steps=n, rng=rng)
        return {"x": b.x, "p": b.p, "z": b.z}

    def bundle(st):
        return TrajectoryBundle(grid, st["x"].copy(), st["p"].copy(), st["z"].copy())

    return _loop.Scheme(grid, ("x",), ("p",), step, fval, init, bundle)


def _sign(problem, rep: SolveReport) -> SolveReport:
    if problem.negate:
        rep.fval = -rep.fval
    return rep


def solve_lax_oc(problem: ControlProblem, target, t: float, cfg: PdhgConfig,
                 sigma: float | None = None, tau: float | None = None) -> SolveReport:
    """Value at ``(target, t)`` from the Lax objective.

    For sign-flip problems (``problem.negate``) the reported ``fval`` is the
    negated objective value.  ``sigma``/``tau`` override the config per call.
    """
    target = _check_target(problem, target)
    grid = make_time_grid(t, cfg.delta, "lax")
    return _sign(problem, _loop.solve_one(lax_scheme(problem, grid, cfg), target, cfg, sigma, tau))


def fval_lax_oc(problem: ControlProblem, bundle: TrajectoryBundle, grid: TimeGrid) -> float:
    """``g(x_0) + sum_j <p_j, x_j - x_{j-1}> - delta sum_j H(x_j, p_j, s_j)``, ``j = 1..N``."""
    _check_shape(bundle, grid.n_steps + 1, bundle.x.shape[-1])
    return float(_lax_fval_arrays(problem, bundle.x, bundle.p, grid.nodes, grid.delta))


def fval_lax_oc_forward(problem: ControlProblem, bundle: TrajectoryBundle, grid: TimeGrid) -> float:
    """Forward-Euler objective on a Lax bundle.

    The multiplier of ``x_{j+1} - x_j`` is ``p_{j+1}`` and the Hamiltonian
    is taken at the left node ``(x_j, p_{j+1}, s_j)``, ``j = 0..N-1``, so
    ``g`` and ``H`` share ``x_0``.
    """
    _check_shape(bundle, grid.n_steps + 1, bundle.x.shape[-1])
    x, p, s = bundle.x, bundle.p, grid.nodes
    g0 = problem.initial_data.g(x[..., 0, :])
    lin = (p[..., 1:, :] * (x[..., 1:, :] - x[..., :-1, :])).sum(axis=-1).sum(axis=-1)
    ham = problem.hamiltonian(x[..., :-1, :], p[..., 1:, :], s[:-1]).sum(axis=-1)
    return float(g0 + lin - grid.delta * ham)


def fval_lax_oc_average(problem: ControlProblem, bundle: TrajectoryBundle, grid: TimeGrid) -> float:
    """Mean of the backward- and forward-Euler objectives on one bundle."""
    return 0.5 * (fval_lax_oc(problem, bundle, grid) + fval_lax_oc_forward(problem, bundle, grid))


# ---------------------------------------------------------------- Hopf

def _hopf_fval_arrays(problem: ControlProblem, x, p, s, delta):
    conj = problem.initial_data.conjugate
    first = -conj.value(p[..., 0, :])
    lin = (apply_D_hopf(p) * x).sum(axis=-1).sum(axis=-1)
    ham = problem.hamiltonian(x, p, s).sum(axis=-1)
    return first + lin - delta * ham


def hopf_scheme(problem: ControlProblem, grid: TimeGrid, cfg: PdhgConfig) -> _loop.Scheme:
    """Hopf objective; rows ``1..N``, ``x_N`` pinned to the target."""
    if grid.scheme != "hopf":
        raise ConfigError("hopf_scheme needs a hopf time grid")
    conj = problem.initial_data.conjugate
    if conj is None:
        raise ConfigError(f"problem {problem.name!r} has no conjugate for its initial data")
    s = grid.nodes
    delta = grid.delta
    n = grid.n_steps
    theta = cfg.theta
    lagged = cfg.variant == "lagged"

    def step(st, sig, tau):
        x, p, z = st["x"], st["p"], st["z"]
        v = p + sig[..., None] * apply_Dt_hopf(z)
        pn = problem.p_update(v, p, Ctx(x=x, s=s), sig * delta)
        pn[:, 0] = conj.prox(pn[:, 0], sig)
        u = x - tau[..., None] * apply_D_hopf(p if lagged else pn)
        xn = np.empty_like(x)
        m = n - 1
        xn[:, :m] = problem.x_update(u[:, :m], x[:, :m], Ctx(p=pn[:, :m], s=s[:m]), tau * delta)
        xn[:, m] = x[:, m]
        zn = xn + theta * (xn - x)
        return {"x": xn, "p": pn, "z": zn}

    def fval(st):
        return _hopf_fval_arrays(problem, st["x"], st["p"], s, delta)

    def init(target, rng, c):
        b = random_init(problem.dim, target, c, "hopf", n_steps=n, rng=rng)
        return {"x": b.x, "p": b.p, "z": b.z}

    def bundle(st):
        return TrajectoryBundle(grid, st["x"].copy(), st["p"].copy(), st["z"].copy())

    return _loop.Scheme(grid, ("x",), ("p",), step, fval, init, bundle)


def solve_hopf_oc(problem: ControlProblem, target, t: float, cfg: PdhgConfig,
                  sigma: float | None = None, tau: float | None = None) -> SolveReport:
    """Value at ``(target, t)`` from the Hopf objective (needs ``g*``)."""
    target = _check_target(problem, target)
    grid = make_time_grid(t, cfg.delta, "hopf")
    return _sign(problem, _loop.solve_one(hopf_scheme(problem, grid, cfg), target, cfg, sigma, tau))


def fval_hopf_oc(problem: ControlProblem, bundle: TrajectoryBundle, grid: TimeGrid, target) -> float:
    """``-g*(p_1) + <p_N, x> + sum_{j<N} <p_j - p_{j+1}, x_j> - delta sum_j H``."""
    if problem.initial_data.conjugate is None:
        raise ConfigError("fval_hopf_oc needs the conjugate of g")
    _check_shape(bundle, grid.n_steps, bundle.x.shape[-1])
    x = bundle.x.copy()
    x[..., -1, :] = np.asarray(target, dtype=float)
    return float(_hopf_fval_arrays(problem, x, bundle.p, grid.nodes, grid.delta))


# ---------------------------------------------------------------- checks

class KKTResidual(NamedTuple):
    r_p: float
    r_x: float
    r_0: float

    @property
    def max(self) -> float:
        return max(self.r_p, self.r_x, self.r_0)


def kkt_residual_oc(problem: ControlProblem, bundle: TrajectoryBundle, grid: TimeGrid) -> KKTResidual:
    """Stationarity residuals of the Lax objective on a Lax-shaped bundle.

    ``r_p`` comes from the ``p_j`` equations, ``r_x`` from the interior
    ``x_j`` equations and ``r_0`` from ``x_0``.
    """
    _check_shape(bundle, grid.n_steps + 1, bundle.x.shape[-1])
    x, p, s, d = bundle.x, bundle.p, grid.nodes, grid.delta
    n = grid.n_steps
    gp = problem.grad_p_H(x[1:], p[1:], s[1:])
    r_p = np.abs(x[1:] - x[:-1] - d * gp).max()
    if n > 1:
        gx = problem.grad_x_H(x[1:n], p[1:n], s[1:n])
        r_x = np.abs(p[1:n] - p[2:] - d * gx).max()
    else:
        r_x = 0.0
    r_0 = np.abs(problem.initial_data.grad_g(x[0]) - p[1]).max()
    return KKTResidual(float(r_p), float(r_x), float(r_0))


def hopf_to_lax_bundle(problem: ControlProblem, bundle: TrajectoryBundle) -> TrajectoryBundle:
    """Prepend the row ``x_0 = grad g*(p_1)``, ``p_0 = 0`` to a Hopf bundle."""
    conj = problem.initial_data.conjugate
    if conj is None:
        raise ConfigError("hopf_to_lax_bundle needs the conjugate of g")
    g = bundle.grid
    grid = TimeGrid(g.t_final, g.delta, g.n_steps, "lax")
    x0 = conj.grad(bundle.p[..., :1, :])
    x = np.concatenate([x0, bundle.x], axis=-2)
    p = np.concatenate([np.zeros_like(x0), bundle.p], axis=-2)
    return TrajectoryBundle(grid, x, p, x.copy())
