"""Two-player zero-sum game solvers on the discretized Lax and Hopf objectives.

The state splits into ``x`` (minimizing player, costate ``p``) and ``y``
(maximizing player, costate ``q``).  Hamiltonians take ``q_neg = -q``.
"""

from __future__ import annotations

import numpy as np

from . import _loop
from ._loop import adapt_sigma
from .core import (
    ConfigError,
    Ctx,
    GameProblem,
    PdhgConfig,
    SolveReport,
    TimeGrid,
    TrajectoryBundle,
    make_time_grid,
    random_init,
)
from .operators import (
    apply_D_hopf,
    apply_D_lax,
    apply_Dt_hopf,
    apply_Dt_lax,
    concave_diag_quad_conjugate,
    diag_quad_conjugate,
)

__all__ = [
    "lax_dg_scheme",
    "hopf_dg_scheme",
    "solve_lax_dg",
    "solve_hopf_dg",
    "fval_lax_dg",
    "fval_hopf_dg",
    "adapt_sigma",
]


def _targets(problem: GameProblem, target_x, target_y):
    tx = np.atleast_1d(np.asarray(target_x, dtype=float))
    ty = np.atleast_1d(np.asarray(target_y, dtype=float))
    if tx.shape != (problem.dim_x,) or ty.shape != (problem.dim_y,):
        raise ConfigError(
            f"targets have shapes {tx.shape}, {ty.shape}; problem blocks are "
            f"({problem.dim_x},), ({problem.dim_y},)"
        )
    return np.concatenate([tx, ty])


def _init(problem, scheme_name, n):
    dims = (problem.dim_x, problem.dim_y)

    def init(target, rng, cfg):
        b = random_init(dims, target, cfg, scheme_name, n_steps=n, rng=rng)
        return {"x": b.x, "y": b.y, "p": b.p, "q": b.q, "z": b.z, "w": b.w}

    return init


def _bundle(grid):
    def bundle(st):
        return TrajectoryBundle(grid, st["x"].copy(), st["p"].copy(), st["z"].copy(),
                                st["y"].copy(), st["q"].copy(), st["w"].copy())
    return bundle


# ---------------------------------------------------------------- Lax

def _lax_dg_fval(problem: GameProblem, x, y, p, q, s, delta):
    g0 = problem.initial_data.g(x[..., 0, :], y[..., 0, :])
    lin = ((p[..., 1:, :] * (x[..., 1:, :] - x[..., :-1, :])).sum(axis=-1)
           - (q[..., 1:, :] * (y[..., 1:, :] - y[..., :-1, :])).sum(axis=-1)).sum(axis=-1)
    ham = problem.hamiltonian(x[..., 1:, :], y[..., 1:, :], p[..., 1:, :], -q[..., 1:, :], s[1:]).sum(axis=-1)
    return g0 + lin - delta * ham


def lax_dg_scheme(problem: GameProblem, grid: TimeGrid, cfg: PdhgConfig) -> _loop.Scheme:
    if grid.scheme != "lax":
        raise ConfigError("lax_dg_scheme needs a lax time grid")
    data = problem.initial_data
    if data.x_step is None or data.y_step is None:
        raise ConfigError(f"problem {problem.name!r} lacks the x_0/y_0 data steps")
    s = grid.nodes
    delta = grid.delta
    n = grid.n_steps
    theta = cfg.theta
    lagged = cfg.variant == "lagged"

    def step(st, sig, tau):
        x, y, p, q, z, w = st["x"], st["y"], st["p"], st["q"], st["z"], st["w"]
        sig3 = sig[..., None]
        tau3 = tau[..., None]
        lam_p = sig * delta
        lam_x = tau * delta
        i = slice(1, None)
        vp = p + sig3 * apply_D_lax(z)
        pn = np.empty_like(p)
        pn[:, 0] = 0.0
        pn[:, i] = problem.p_update(vp[:, i], p[:, i], Ctx(x=x[:, i], y=y[:, i], qn=-q[:, i], s=s[i]), lam_p)
        vq = q + sig3 * apply_D_lax(w)
        qn = np.empty_like(q)
        qn[:, 0] = 0.0
        qn[:, i] = problem.q_update(vq[:, i], q[:, i], Ctx(x=x[:, i], y=y[:, i], p=pn[:, i], s=s[i]), lam_p)

        u = x - tau3 * apply_Dt_lax(p if lagged else pn)
        r = y - tau3 * apply_Dt_lax(q if lagged else qn)
        m = slice(1, n)
        xn = np.empty_like(x)
        xn[:, 0] = data.x_step(u[:, 0], y[:, 0], tau)
        xn[:, m] = problem.x_update(u[:, m], x[:, m], Ctx(y=y[:, m], p=pn[:, m], qn=-qn[:, m], s=s[m]), lam_x)
        xn[:, n] = x[:, n]
        yn = np.empty_like(y)
        yn[:, 0] = data.y_step(r[:, 0], x[:, 0], tau)
        yn[:, m] = problem.y_update(r[:, m], y[:, m], Ctx(x=x[:, m], p=pn[:, m], qn=-qn[:, m], s=s[m]), lam_x)
        yn[:, n] = y[:, n]
        return {"x": xn, "y": yn, "p": pn, "q": qn,
                "z": xn + theta * (xn - x), "w": yn + theta * (yn - y)}

    def fval(st):
        return _lax_dg_fval(problem, st["x"], st["y"], st["p"], st["q"], s, delta)

    return _loop.Scheme(grid, ("x", "y"), ("p", "q"), step, fval, _init(problem, "lax", n), _bundle(grid))


def solve_lax_dg(problem: GameProblem, target_x, target_y, t: float, cfg: PdhgConfig,
                 sigma: float | None = None, tau: float | None = None) -> SolveReport:
    """Game value at ``((target_x, target_y), t)`` from the Lax objective."""
    target = _targets(problem, target_x, target_y)
    grid = make_time_grid(t, cfg.delta, "lax")
    return _loop.solve_one(lax_dg_scheme(problem, grid, cfg), target, cfg, sigma, tau)


def fval_lax_dg(problem: GameProblem, bundle: TrajectoryBundle, grid: TimeGrid) -> float:
    """``g(x_0, y_0) + sum <(p, -q), (dx, dy)> - delta sum H(x, y, p, -q)``."""
    return float(_lax_dg_fval(problem, bundle.x, bundle.y, bundle.p, bundle.q, grid.nodes, grid.delta))


# ---------------------------------------------------------------- Hopf

def _conjugates(problem: GameProblem):
    data = problem.initial_data
    if not data.separable:
        raise ConfigError(f"problem {problem.name!r} has no separable convex-concave data")
    return diag_quad_conjugate(data.convex_part), concave_diag_quad_conjugate(data.concave_part)


def _hopf_dg_fval(problem, ec, hc, x, y, p, q, s, delta):
    first = -ec.value(p[..., 0, :]) - hc.value(-q[..., 0, :])
    lin = ((apply_D_hopf(p) * x).sum(axis=-1) - (apply_D_hopf(q) * y).sum(axis=-1)).sum(axis=-1)
    ham = problem.hamiltonian(x, y, p, -q, s).sum(axis=-1)
    return first + lin - delta * ham


def hopf_dg_scheme(problem: GameProblem, grid: TimeGrid, cfg: PdhgConfig) -> _loop.Scheme:
    """Hopf objective for data ``e(x) + h(y)``, ``e`` convex and ``h`` concave."""
    if grid.scheme != "hopf":
        raise ConfigError("hopf_dg_scheme needs a hopf time grid")
    ec, hc = _conjugates(problem)
    s = grid.nodes
    delta = grid.delta
    n = grid.n_steps
    theta = cfg.theta
    lagged = cfg.variant == "lagged"

    def step(st, sig, tau):
        x, y, p, q, z, w = st["x"], st["y"], st["p"], st["q"], st["z"], st["w"]
        sig3 = sig[..., None]
        tau3 = tau[..., None]
        lam_p = sig * delta
        lam_x = tau * delta
        vp = p + sig3 * apply_Dt_hopf(z)
        pn = problem.p_update(vp, p, Ctx(x=x, y=y, qn=-q, s=s), lam_p)
        pn[:, 0] = ec.prox(pn[:, 0], sig)
        vq = q + sig3 * apply_Dt_hopf(w)
        qn = problem.q_update(vq, q, Ctx(x=x, y=y, p=pn, s=s), lam_p)
        qn[:, 0] = hc.prox(qn[:, 0], sig)

        u = x - tau3 * apply_D_hopf(p if lagged else pn)
        r = y - tau3 * apply_D_hopf(q if lagged else qn)
        m = slice(0, n - 1)
        xn = np.empty_like(x)
        xn[:, m] = problem.x_update(u[:, m], x[:, m], Ctx(y=y[:, m], p=pn[:, m], qn=-qn[:, m], s=s[m]), lam_x)
        xn[:, n - 1] = x[:, n - 1]
        yn = np.empty_like(y)
        yn[:, m] = problem.y_update(r[:, m], y[:, m], Ctx(x=x[:, m], p=pn[:, m], qn=-qn[:, m], s=s[m]), lam_x)
        yn[:, n - 1] = y[:, n - 1]
        return {"x": xn, "y": yn, "p": pn, "q": qn,
                "z": xn + theta * (xn - x), "w": yn + theta * (yn - y)}

    def fval(st):
        return _hopf_dg_fval(problem, ec, hc, st["x"], st["y"], st["p"], st["q"], s, delta)

    return _loop.Scheme(grid, ("x", "y"), ("p", "q"), step, fval, _init(problem, "hopf", n), _bundle(grid))


def solve_hopf_dg(problem: GameProblem, target_x, target_y, t: float, cfg: PdhgConfig,
                  sigma: float | None = None, tau: float | None = None) -> SolveReport:
    """Game value from the Hopf objective; needs separable convex-concave data."""
    target = _targets(problem, target_x, target_y)
    grid = make_time_grid(t, cfg.delta, "hopf")
    return _loop.solve_one(hopf_dg_scheme(problem, grid, cfg), target, cfg, sigma, tau)


def fval_hopf_dg(problem: GameProblem, bundle: TrajectoryBundle, grid: TimeGrid, target_x, target_y) -> float:
    """``-e*(p_1) - h_*(-q_1) + <D p, x> - <D q, y> - delta sum H(x, y, p, -q)``."""
    ec, hc = _conjugates(problem)
    x = bundle.x.copy()
    y = bundle.y.copy()
    x[..., -1, :] = np.atleast_1d(np.asarray(target_x, dtype=float))
    y[..., -1, :] = np.atleast_1d(np.asarray(target_y, dtype=float))
    return float(_hopf_dg_fval(problem, ec, hc, x, y, bundle.p, bundle.q, grid.nodes, grid.delta))
