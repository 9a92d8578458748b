"""Brute-force oracles used by the tests; independent of the package's closed forms."""

from __future__ import annotations

import numpy as np
from scipy import optimize

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo, hi, tol=1e-12, max_iter=200):
    """Minimize a unimodal scalar function on ``[lo, hi]``."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def prox_1d(f, v, lam, half_width=None, n=4001):
    """``argmin_u f(u) + (u - v)^2 / (2 lam)`` by dense search plus golden polish."""
    obj = lambda u: f(u) + (u - v) ** 2 / (2.0 * lam)
    w = half_width if half_width is not None else 4.0 * (abs(v) + lam + 1.0)
    grid = np.linspace(v - w, v + w, n)
    vals = np.array([obj(u) for u in grid])
    k = int(np.argmin(vals))
    h = grid[1] - grid[0]
    return golden_section(obj, grid[k] - h, grid[k] + h)


def prox_2d(f, v, lam, half_width=None, n=101):
    """2-D version of :func:`prox_1d`; see :func:`prox_2d_batch`."""
    return prox_2d_batch(lambda u: f(u), np.asarray(v, dtype=float)[None], np.atleast_1d(lam),
                         n=n, half_width=half_width)[0]


def legendre_1d(f, p, lo=-50.0, hi=50.0, n=200001):
    """``sup_x p x - f(x)`` on a dense grid with golden polish."""
    xs = np.linspace(lo, hi, n)
    vals = p * xs - f(xs)
    k = int(np.argmax(vals))
    h = xs[1] - xs[0]
    x = golden_section(lambda t: -(p * t - f(t)), xs[k] - h, xs[k] + h)
    return float(p * x - f(x))


def min_over_disc(g, x, radius, n=300):
    """``min g`` over the closed disc of ``radius`` about a 2-D point, polished by SLSQP."""
    x = np.asarray(x, dtype=float)
    if radius <= 0:
        return float(g(x))
    r = radius * np.sqrt(np.linspace(0.0, 1.0, n))
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    R, T = np.meshgrid(r, th, indexing="ij")
    Y = x + np.stack([R * np.cos(T), R * np.sin(T)], axis=-1)
    vals = g(Y)
    k = np.unravel_index(np.argmin(vals), vals.shape)
    y0 = Y[k]
    res = optimize.minimize(lambda y: float(g(y)), y0, method="SLSQP",
                            constraints=[{"type": "ineq", "fun": lambda y: radius ** 2 - ((y - x) ** 2).sum()}],
                            options={"ftol": 1e-14, "maxiter": 200})
    return min(float(vals[k]), float(res.fun))



# ---------------------------------------------------------------- batched forms

def golden_batch(f, lo, hi, iters=100):
    """Vectorized golden section: ``f`` maps an array of candidates to values."""
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    for _ in range(iters):
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        left = f(c) < f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return 0.5 * (a + b)


def prox_1d_batch(f, v, lam, half_width=None, n=4001):
    """Batched :func:`prox_1d` for an elementwise ``f``; ``v`` and ``lam`` are 1-D arrays."""
    v = np.asarray(v, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), v.shape)
    if half_width is None:
        w = 4.0 * (np.abs(v) + lam + 1.0)
    else:
        w = np.broadcast_to(np.asarray(half_width, dtype=float), v.shape)
    s = np.linspace(-1.0, 1.0, n)
    U = v[:, None] + w[:, None] * s
    vals = f(U) + (U - v[:, None]) ** 2 / (2.0 * lam[:, None])
    u0 = U[np.arange(len(v)), np.argmin(vals, axis=1)]
    h = w * (s[1] - s[0])
    obj = lambda u: f(u) + (u - v) ** 2 / (2.0 * lam)
    return golden_batch(obj, u0 - h, u0 + h)


def _grid_argmin(obj, centre, w, g):
    """Best node of the ``len(g)^2`` grid ``centre + w * (g_i, g_j)`` per batch row."""
    A = centre[:, 0, None, None] + w[:, None, None] * g[:, None]
    B = centre[:, 1, None, None] + w[:, None, None] * g[None, :]
    P = np.stack(np.broadcast_arrays(A, B), axis=-1)
    k = obj(P).reshape(len(P), -1).argmin(axis=1)
    return P.reshape(len(P), -1, 2)[np.arange(len(P)), k]


def prox_2d_batch(f, V, lam, n=101, half_width=None, chunk=16):
    """``argmin_u f(u) + |u - v|^2 / (2 lam)`` per row of ``V``.

    Dense grid, then repeated local zooms (coordinate-wise descent can stall
    at kinks of non-separable ``f``), then a golden-section polish per axis.
    ``f`` maps ``(..., 2)`` arrays to ``(...)`` values.
    """
    V = np.asarray(V, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), V.shape[:1]).astype(float)
    if half_width is None:
        w = 2.0 * (np.abs(V).max(axis=1) + lam + 1.0)
    else:
        w = np.broadcast_to(np.asarray(half_width, dtype=float), V.shape[:1]).astype(float)
    g = np.linspace(-1.0, 1.0, n)
    U = np.empty_like(V)
    for lo in range(0, len(V), chunk):
        sl = slice(lo, lo + chunk)
        obj = lambda P, sl=sl: f(P) + ((P - V[sl, None, None, :]) ** 2).sum(-1) / (2.0 * lam[sl, None, None])
        U[sl] = _grid_argmin(obj, V[sl], w[sl], g)
    h = w * (g[1] - g[0])
    z = np.linspace(-1.0, 1.0, 41)
    obj = lambda P: f(P) + ((P - V[:, None, None, :]) ** 2).sum(-1) / (2.0 * lam[:, None, None])
    while h.max() > 1e-11:
        U = _grid_argmin(obj, U, 6.0 * h, z)
        h = 6.0 * h * (z[1] - z[0])
    flat = lambda u: f(u) + ((u - V) ** 2).sum(-1) / (2.0 * lam)
    for c in range(2):
        def fc(t, c=c):
            uu = U.copy()
            uu[:, c] = t
            return flat(uu)
        U[:, c] = golden_batch(fc, U[:, c] - 4.0 * h, U[:, c] + 4.0 * h, iters=40)
    return U


def legendre_batch(f, p, radius=200.0):
    """``sup_x p x - f(x)`` for a concave-in-x objective, elementwise over ``p``."""
    p = np.asarray(p, dtype=float)
    neg = lambda x: -(p * x - f(x))
    x = golden_batch(neg, np.full(p.shape, -radius), np.full(p.shape, radius), iters=110)
    return p * x - f(x)
