"""Independent oracles: a 2-D Lax-Friedrichs solver, a brute-force Lax
formula for constant speed, and a dense KKT solve for 1-D quadratic problems.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .core import ConfigError, ControlProblem, InitialData, ProxRule, TimeGrid, TrajectoryBundle

__all__ = [
    "LFResult",
    "estimate_alpha",
    "lax_friedrichs_2d",
    "brute_force_lax",
    "quadratic_test_problem",
    "kkt_linear_oracle",
]


@dataclass
class LFResult:
    """Fields ``values[k]`` at ``times[k]`` on the nodes ``xs`` x ``ys`` (``ij`` indexing)."""

    xs: np.ndarray
    ys: np.ndarray
    times: np.ndarray
    values: np.ndarray
    alpha: tuple
    dt: float


def _axis(lo, hi, mesh):
    n = int(np.floor((hi - lo) / mesh + 1e-9)) + 1
    return lo + mesh * np.arange(n)


def estimate_alpha(H: Callable, pts, p_box, safety: float = 1.5, n_p: int = 9, s=0.0, h: float = 1e-6):
    """``safety * max |dH/dp_i|`` over the points and a ``n_p x n_p`` grid of the ``p`` box.

    Partial derivatives use central differences, so ``H`` need only be
    evaluable.  ``p_box = ((lo1, hi1), (lo2, hi2))``.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    g1 = np.linspace(p_box[0][0], p_box[0][1], n_p)
    g2 = np.linspace(p_box[1][0], p_box[1][1], n_p)
    P = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)
    X = np.repeat(pts, len(P), axis=0)
    PP = np.tile(P, (len(pts), 1))
    out = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        d = (H(X, PP + e, s) - H(X, PP - e, s)) / (2 * h)
        out.append(safety * float(np.max(np.abs(d))))
    return tuple(max(a, 1e-12) for a in out)


def lax_friedrichs_2d(H: Callable, g: Callable, domain, mesh: float, times: Sequence[float],
                      cfl: float = 0.45, alpha=None, pad: int = 10, time_dependent: bool = False,
                      alpha_samples: int = 2000, seed: int = 0) -> LFResult:
    """Solve ``phi_t + H(x, grad phi, t) = 0``, ``phi(., 0) = g`` on a 2-D box.

    ``H(x, p, s)`` and ``g(x)`` act on arrays whose last axis has length 2.
    The numerical Hamiltonian is ``H`` at the central gradient minus
    ``alpha_i (D+_i - D-_i)/2``, stepped by forward Euler with
    ``dt = cfl * mesh / (alpha_x + alpha_y)``.  ``pad`` ghost cells per side
    are filled by linear extrapolation.  ``alpha=None`` estimates the pair
    with :func:`estimate_alpha` over the gradient range of ``g``.
    """
    if not 0 < cfl < 1:
        raise ConfigError(f"cfl must lie in (0, 1), got {cfl}")
    if mesh <= 0:
        raise ConfigError("mesh must be positive")
    times = np.asarray(sorted(float(t) for t in times))
    if times.size and times[0] < 0:
        raise ConfigError("times must be non-negative")
    xlo, xhi, ylo, yhi = (float(v) for v in domain)
    xs = _axis(xlo, xhi, mesh)
    ys = _axis(ylo, yhi, mesh)
    ex = xs[0] + mesh * np.arange(-pad, len(xs) + pad)
    ey = ys[0] + mesh * np.arange(-pad, len(ys) + pad)
    Z = np.stack(np.meshgrid(ex, ey, indexing="ij"), axis=-1)
    phi = np.asarray(g(Z), dtype=float)

    if alpha is None:
        gx, gy = np.gradient(phi, mesh)
        span = max(np.abs(gx).max(), np.abs(gy).max(), 1e-3) * 1.1
        rng = np.random.default_rng(seed)
        flat = Z.reshape(-1, 2)
        pts = flat[rng.choice(len(flat), size=min(alpha_samples, len(flat)), replace=False)]
        box = ((-span, span), (-span, span))
        alpha = estimate_alpha(H, pts, box, s=0.0)
        if time_dependent and times.size:
            for s in np.linspace(0.0, times[-1], 5)[1:]:
                a = estimate_alpha(H, pts, box, s=s)
                alpha = (max(alpha[0], a[0]), max(alpha[1], a[1]))
    ax, ay = (float(a) for a in alpha)
    if ax < 0 or ay < 0:
        raise ConfigError("alpha must be non-negative")
    dt_max = cfl * mesh / max(ax + ay, 1e-12)

    inner = Z[1:-1, 1:-1]
    out = np.empty((len(times), len(xs), len(ys)))
    t_now = 0.0
    sl = (slice(pad, pad + len(xs)), slice(pad, pad + len(ys)))
    for k, t_goal in enumerate(times):
        span = t_goal - t_now
        n = int(np.ceil(span / dt_max - 1e-12)) if span > 0 else 0
        dt = span / n if n else 0.0
        for _ in range(n):
            dxp = (phi[2:, 1:-1] - phi[1:-1, 1:-1]) / mesh
            dxm = (phi[1:-1, 1:-1] - phi[:-2, 1:-1]) / mesh
            dyp = (phi[1:-1, 2:] - phi[1:-1, 1:-1]) / mesh
            dym = (phi[1:-1, 1:-1] - phi[1:-1, :-2]) / mesh
            grad = np.stack([0.5 * (dxp + dxm), 0.5 * (dyp + dym)], axis=-1)
            ham = H(inner, grad, t_now) - 0.5 * ax * (dxp - dxm) - 0.5 * ay * (dyp - dym)
            phi[1:-1, 1:-1] -= dt * ham
            phi[0, :] = 2 * phi[1, :] - phi[2, :]
            phi[-1, :] = 2 * phi[-2, :] - phi[-3, :]
            phi[:, 0] = 2 * phi[:, 1] - phi[:, 2]
            phi[:, -1] = 2 * phi[:, -2] - phi[:, -3]
            t_now += dt
        t_now = t_goal
        out[k] = phi[sl]
    return LFResult(xs, ys, times, out, (ax, ay), dt_max)


def brute_force_lax(g: Callable, c_const: float, x, t: float, n_radial: int = 400,
                    n_angular: int = 400) -> float:
    """``min g(y)`` over the disc ``|y - x| <= c t`` (the Lax formula for ``H = c|p|``).

    Dense polar sampling followed by a bounded local polish in polar
    coordinates.  Two-dimensional points only.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise ConfigError("brute_force_lax works on 2-D points")
    R = float(c_const) * float(t)
    if R <= 0:
        return float(g(x))
    r = R * np.sqrt(np.linspace(0.0, 1.0, n_radial))
    th = np.linspace(0.0, 2 * np.pi, n_angular, endpoint=False)
    rr, tt = np.meshgrid(r, th, indexing="ij")
    Y = x + np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
    vals = g(Y)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    best = float(vals[i, j])

    def f(u):
        return float(g(x + u[0] * np.array([np.cos(u[1]), np.sin(u[1])])))

    res = optimize.minimize(f, [rr[i, j], tt[i, j]], method="L-BFGS-B",
                            bounds=[(0.0, R), (tt[i, j] - 0.1, tt[i, j] + 0.1)],
                            options={"ftol": 1e-15, "gtol": 1e-12})
    return min(best, float(res.fun))


def quadratic_test_problem(a: float = 1.0, b: float = 0.0, g0: float = 0.0, kappa: float = 0.0) -> ControlProblem:
    """1-D problem ``H = p^2/2 + kappa x^2/2``, ``g = g0 + a x^2/2 + b x`` with exact block updates."""
    if a <= 0:
        raise ConfigError("a must be positive")

    def H(x, p, s=0.0):
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        return 0.5 * (p * p).sum(-1) + 0.5 * kappa * (x * x).sum(-1)

    def gx(x, p, s=0.0):
        return kappa * np.asarray(x, float) + 0.0 * np.asarray(p, float)

    def gp(x, p, s=0.0):
        return np.asarray(p, float) + 0.0 * np.asarray(x, float)

    def x_prox(v, ctx, lam):
        lam = lam[..., None]
        if np.any(lam * kappa >= 1.0):
            raise ConfigError("x step needs tau*delta*kappa < 1")
        return v / (1.0 - lam * kappa)

    data = InitialData(
        g=lambda x: g0 + 0.5 * a * (np.asarray(x, float) ** 2).sum(-1) + b * np.asarray(x, float).sum(-1),
        grad_g=lambda x: a * np.asarray(x, float) + b,
        prox_g=lambda v, lam: (v - lam * b) / (1.0 + lam * a),
    )
    return ControlProblem(
        1, H, gx, gp,
        ProxRule("closed-form-prox", prox=lambda v, ctx, lam: v / (1.0 + lam[..., None])),
        ProxRule("closed-form-prox", prox=x_prox),
        data,
        name="quadratic-1d",
    )


def kkt_linear_oracle(a: float, b: float, g0: float, kappa: float, target: float,
                      grid: TimeGrid) -> TrajectoryBundle:
    """Exact stationary bundle of the Lax objective for :func:`quadratic_test_problem`.

    Unknowns ``x_0..x_{N-1}, p_1..p_N`` satisfy
    ``x_j - x_{j-1} = delta p_j``, ``a x_0 + b = p_1`` and
    ``p_j - p_{j+1} = delta kappa x_j``.
    """
    if grid.scheme != "lax":
        raise ConfigError("kkt_linear_oracle needs a lax grid")
    n = grid.n_steps
    d = grid.delta
    m = 2 * n
    A = np.zeros((m, m))
    rhs = np.zeros(m)
    xi = lambda j: j            # x_j, j = 0..N-1
    pi = lambda j: n + j - 1    # p_j, j = 1..N
    row = 0
    for j in range(1, n + 1):
        A[row, pi(j)] = -d
        A[row, xi(j - 1)] -= 1.0
        if j < n:
            A[row, xi(j)] += 1.0
        else:
            rhs[row] -= target
        row += 1
    A[row, xi(0)] = a
    A[row, pi(1)] = -1.0
    rhs[row] = -b
    row += 1
    for j in range(1, n):
        A[row, pi(j)] = 1.0
        A[row, pi(j + 1)] = -1.0
        A[row, xi(j)] = -d * kappa
        row += 1
    if np.linalg.cond(A) > 1e12:
        raise ConfigError("KKT system is singular")
    sol = np.linalg.solve(A, rhs)
    x = np.empty((n + 1, 1))
    x[:n, 0] = sol[:n]
    x[n, 0] = target
    p = np.zeros((n + 1, 1))
    p[1:, 0] = sol[n:]
    return TrajectoryBundle(grid, x, p, x.copy())
