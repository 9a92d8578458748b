"""Hamiltonians, update rules, initial data and default configs for the test problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    TAU_BUDGET,
    ConfigError,
    ControlProblem,
    GameInitialData,
    GameProblem,
    InitialData,
    PdhgConfig,
    ProxRule,
)
from .operators import DiagQuadratic, shrink1, shrink2

__all__ = [
    "BumpSpeed",
    "eikonal_data",
    "eikonal_plus",
    "eikonal_minus",
    "eikonal_time",
    "eikonal_sigma",
    "diff_norms",
    "isaacs",
    "isaacs_sigma",
    "quadcopter",
    "QUADCOPTER_TARGET",
    "RegistryEntry",
    "REGISTRY",
    "get_problem",
]


def _norm(v):
    v = np.asarray(v, dtype=float)
    return np.sqrt((v * v).sum(axis=-1))


def _unit(v):
    """``v / |v|`` with the convention ``0`` at ``v = 0``."""
    v = np.asarray(v, dtype=float)
    n = _norm(v)[..., None]
    return np.where(n > 0.0, v / np.where(n > 0.0, n, 1.0), 0.0)


@dataclass(frozen=True)
class BumpSpeed:
    """``c(x) = scale * (base + amplitude * exp(-sharpness * |x - center|^2))``.

    The center is ``(1, 1, 0, ..., 0)`` truncated or padded to the argument's
    dimension unless given explicitly.
    """

    base: float = 1.0
    amplitude: float = 3.0
    sharpness: float = 4.0
    center: Optional[tuple] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.base <= 0 or self.amplitude < 0 or self.scale <= 0:
            raise ConfigError("BumpSpeed needs base > 0, amplitude >= 0, scale > 0")

    def _center(self, d):
        cache = self.__dict__.setdefault("_centers", {})
        if d not in cache:
            cache[d] = self._make_center(d)
        return cache[d]

    def _make_center(self, d):
        if self.center is not None:
            c = np.asarray(self.center, dtype=float)
            if c.shape != (d,):
                raise ConfigError(f"bump center has dimension {c.size}, state has {d}")
            return c
        c = np.zeros(d)
        c[:min(d, 2)] = 1.0
        return c

    def _exp(self, x):
        x = np.asarray(x, dtype=float)
        r = x - self._center(x.shape[-1])
        return r, np.exp(-self.sharpness * (r * r).sum(axis=-1))

    def __call__(self, x):
        _, e = self._exp(x)
        return self.scale * (self.base + self.amplitude * e)

    def grad(self, x):
        r, e = self._exp(x)
        return (-2.0 * self.scale * self.amplitude * self.sharpness * e)[..., None] * r


def _time_arg(s):
    return np.asarray(0.0 if s is None else s, dtype=float)[..., None]


def _eikonal_problem(dim, speed: BumpSpeed, drift, data: InitialData, name, negate):
    drift = np.zeros(dim) if drift is None else np.asarray(drift, dtype=float)
    if drift.shape != (dim,):
        raise ConfigError(f"drift must have shape ({dim},)")
    moving = bool(np.any(drift != 0.0))

    def shift(x, s):
        x = np.asarray(x, dtype=float)
        return x - _time_arg(s) * drift if moving else x

    def H(x, p, s=0.0):
        return speed(shift(x, s)) * _norm(p)

    def grad_x(x, p, s=0.0):
        return speed.grad(shift(x, s)) * _norm(p)[..., None]

    def grad_p(x, p, s=0.0):
        return speed(shift(x, s))[..., None] * _unit(p)

    p_rule = ProxRule("closed-form-prox", prox=lambda v, ctx, lam: shrink2(v, lam * speed(shift(ctx.x, ctx.s))))
    x_rule = ProxRule("gradient-step", grad=lambda x, ctx: -grad_x(x, ctx.p, ctx.s))
    return ControlProblem(dim, H, grad_x, grad_p, p_rule, x_rule, data, name=name, negate=negate)


def eikonal_data(dim: int) -> DiagQuadratic:
    """``-1/2 + <A^-1 x, x>/2`` with ``A = diag(2.5^2, 1, 0.5^2, ...)``."""
    if dim < 1:
        raise ConfigError("dim must be >= 1")
    a = [6.25, 1.0, *([0.25] * max(dim - 2, 0))][:dim]
    return DiagQuadratic(-0.5, tuple(a))


def eikonal_plus(dim: int = 2, amplitude: float = 3.0) -> ControlProblem:
    """``H(x, p) = c(x) |p|`` with data ``g`` from :func:`eikonal_data`."""
    return _eikonal_problem(dim, BumpSpeed(amplitude=amplitude), None,
                            InitialData.from_quadratic(eikonal_data(dim)), "eikonal+", False)


def eikonal_minus(dim: int = 2, amplitude: float = 3.0) -> ControlProblem:
    """``H(x, p) = -c(x) |p|`` through the sign flip.

    The returned problem is ``c(x)|p|`` with data ``-g`` and ``negate=True``,
    so solvers report ``-phi``; ``pde_hamiltonian`` gives ``-c(x)|p|``.
    """
    return _eikonal_problem(dim, BumpSpeed(amplitude=amplitude), None,
                            InitialData.from_quadratic(eikonal_data(dim), negate=True), "eikonal-", True)


def eikonal_time(dim: int = 2, drift=None, amplitude: float = 3.0) -> ControlProblem:
    """``H(x, p, s) = c(x - s * drift) |p|``, default drift ``(-1, 1, 0, ...)``."""
    if drift is None:
        drift = np.zeros(dim)
        drift[:min(dim, 2)] = (-1.0, 1.0)[:min(dim, 2)]
    return _eikonal_problem(dim, BumpSpeed(amplitude=amplitude), drift,
                            InitialData.from_quadratic(eikonal_data(dim)), "eikonal-t", False)


def eikonal_sigma(target, t=None, amplitude: float = 3.0) -> float:
    """50 where the bump is felt (``|grad c| > 1e-3``), 0.5 elsewhere."""
    gc = BumpSpeed(amplitude=amplitude).grad(np.asarray(target, dtype=float))
    return 50.0 if _norm(gc) > 1e-3 else 0.5


# ---------------------------------------------------------------- games

def _stack(x, y):
    """Concatenate state blocks along the last axis, broadcasting leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[:-1] != y.shape[:-1]:
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        x = np.broadcast_to(x, shape + x.shape[-1:])
        y = np.broadcast_to(y, shape + y.shape[-1:])
    return np.concatenate([x, y], axis=-1)


def diff_norms(dim_x: int = 1, dim_y: int = 1, speed: Optional[BumpSpeed] = None,
               data: Optional[GameInitialData] = None) -> GameProblem:
    """``H = c1(z)|p| - c2(z)|q|`` on the stacked state ``z = (x, y)``, ``c2(z) = c1(-z)``.

    ``speed`` defaults to the standard bump and ``data`` to the stacked
    quadratic of :func:`eikonal_data`.
    """
    if dim_x < 1 or dim_y < 1:
        raise ConfigError("block dimensions must be >= 1")
    bump = BumpSpeed() if speed is None else speed
    d = dim_x + dim_y

    def stack(x, y):
        return _stack(x, y)

    def H(x, y, p, qn, s=0.0):
        z = stack(x, y)
        return bump(z) * _norm(p) - bump(-z) * _norm(qn)

    def grad_z(x, y, p, qn):
        z = stack(x, y)
        return bump.grad(z) * _norm(p)[..., None] + bump.grad(-z) * _norm(qn)[..., None]

    def grad_x(x, y, p, qn, s=0.0):
        return grad_z(x, y, p, qn)[..., :dim_x]

    def grad_y(x, y, p, qn, s=0.0):
        return grad_z(x, y, p, qn)[..., dim_x:]

    def grad_p(x, y, p, qn, s=0.0):
        return bump(stack(x, y))[..., None] * _unit(p)

    def grad_qn(x, y, p, qn, s=0.0):
        return -bump(-stack(x, y))[..., None] * _unit(qn)

    p_rule = ProxRule("closed-form-prox", prox=lambda v, c, lam: shrink2(v, lam * bump(stack(c.x, c.y))))
    q_rule = ProxRule("closed-form-prox", prox=lambda v, c, lam: shrink2(v, lam * bump(-stack(c.x, c.y))))
    x_rule = ProxRule("gradient-step", grad=lambda x, c: -grad_x(x, c.y, c.p, c.qn, c.s))
    y_rule = ProxRule("gradient-step", grad=lambda y, c: grad_y(c.x, y, c.p, c.qn, c.s))
    if data is None:
        data = GameInitialData.stacked_quadratic(eikonal_data(d), dim_x)
    return GameProblem(dim_x, dim_y, H, grad_x, grad_y, grad_p, grad_qn,
                       p_rule, q_rule, x_rule, y_rule, data, name=f"diffnorms{d}")


def isaacs(variant: str = "convex_concave") -> GameProblem:
    """``H(x, y, p, r) = -c(x, y) r + 2|p| - sqrt(p^2 + r^2) - 1`` with ``c`` a scale-2 bump.

    ``convex``: ``g = -1/2 + (x^2/2.5^2 + y^2)/2`` (Lax solver).
    ``convex_concave``: ``g = -1/2 + ((2.5 x)^2 - y^2)/2`` (Hopf solver).
    """
    bump = BumpSpeed(scale=2.0)

    def stack(x, y):
        return _stack(x, y)

    def radius(p, r):
        return np.sqrt(p * p + r * r)

    def ratio(a, p, r):
        rad = radius(p, r)
        return np.where(rad > 0.0, a / np.where(rad > 0.0, rad, 1.0), 0.0)

    def H(x, y, p, qn, s=0.0):
        c = bump(stack(x, y))
        p = np.asarray(p, dtype=float)[..., 0]
        r = np.asarray(qn, dtype=float)[..., 0]
        return -c * r + 2.0 * np.abs(p) - radius(p, r) - 1.0

    def grad_x(x, y, p, qn, s=0.0):
        return -np.asarray(qn, float) * bump.grad(stack(x, y))[..., :1]

    def grad_y(x, y, p, qn, s=0.0):
        return -np.asarray(qn, float) * bump.grad(stack(x, y))[..., 1:]

    def grad_p(x, y, p, qn, s=0.0):
        p = np.asarray(p, float)
        return 2.0 * np.sign(p) - ratio(p, p, np.asarray(qn, float))

    def grad_qn(x, y, p, qn, s=0.0):
        r = np.asarray(qn, float)
        return -bump(stack(x, y))[..., None] - ratio(r, np.asarray(p, float), r)

    # p: gradient step on -sqrt(p^2 + r^2), then the prox of 2|p|
    p_rule = ProxRule(
        "prox-gradient",
        grad=lambda p, c: -ratio(p, p, c.qn),
        prox=lambda v, c, lam: shrink1(v, 2.0 * lam[..., None]),
    )
    # q minimizes -H(., -q) = -c q + sqrt(p^2 + q^2) + const
    q_rule = ProxRule(
        "gradient-step",
        grad=lambda q, c: -bump(stack(c.x, c.y))[..., None] + ratio(q, c.p, q),
    )
    x_rule = ProxRule("gradient-step", grad=lambda x, c: -grad_x(x, c.y, c.p, c.qn, c.s))
    y_rule = ProxRule("gradient-step", grad=lambda y, c: grad_y(c.x, y, c.p, c.qn, c.s))
    if variant == "convex":
        data = GameInitialData.stacked_quadratic(DiagQuadratic(-0.5, (6.25, 1.0)), 1)
        name = "isaacs"
    elif variant == "convex_concave":
        data = GameInitialData.separable_quadratic(DiagQuadratic(-0.5, (0.16,)), DiagQuadratic(0.0, (1.0,)))
        name = "isaacs-cc"
    else:
        raise ConfigError(f"unknown isaacs variant {variant!r}")
    return GameProblem(1, 1, H, grad_x, grad_y, grad_p, grad_qn,
                       p_rule, q_rule, x_rule, y_rule, data, name=name)


def isaacs_sigma(target=None, t: float = 0.025) -> float:
    """2 up to ``t = 0.075``, 10 beyond."""
    return 2.0 if t <= 0.075 + 1e-12 else 10.0


# ---------------------------------------------------------------- quadcopter

QUADCOPTER_TARGET = (0.36, -0.62, -0.06, 0.23, 0.85, -0.66, 0.72, -0.45, 0.15, -0.75, 0.04, -0.83)


def _thrust_dir(x):
    psi, th, phi = x[..., 3], x[..., 4], x[..., 5]
    sps, cps = np.sin(psi), np.cos(psi)
    sth, cth = np.sin(th), np.cos(th)
    sph, cph = np.sin(phi), np.cos(phi)
    w = np.stack([sph * sps + cph * cps * sth,
                  -cps * sph + cph * sth * sps,
                  cth * cph], axis=-1)
    # partial derivatives of w w.r.t. (psi, theta, phi)
    dpsi = np.stack([sph * cps - cph * sps * sth,
                     sps * sph + cph * sth * cps,
                     np.zeros_like(psi)], axis=-1)
    dth = np.stack([cph * cps * cth,
                    cph * cth * sps,
                    -sth * cph], axis=-1)
    dphi = np.stack([cph * sps - sph * cps * sth,
                     -cps * cph - sph * sth * sps,
                     -cth * sph], axis=-1)
    return w, (dpsi, dth, dphi)


def quadcopter(mass: float = 1.0, gravity: float = 9.8) -> ControlProblem:
    """12-D quadcopter with running cost ``2 + |controls|^2``.

    State order ``(x, y, z, psi, theta, phi)`` followed by their velocities.
    Maximizing over the thrust ``u`` gives ``(w . p[6:9])^2 / (4 m^2)``.
    """
    if mass <= 0:
        raise ConfigError("mass must be positive")
    k = 1.0 / (4.0 * mass * mass)

    def H(x, p, s=0.0):
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        w, _ = _thrust_dir(x)
        wp = (w * p[..., 6:9]).sum(axis=-1)
        return ((x[..., 6:12] * p[..., 0:6]).sum(axis=-1) + k * wp * wp
                - gravity * p[..., 8] + 0.25 * (p[..., 9:12] ** 2).sum(axis=-1) - 2.0)

    def grad_x(x, p, s=0.0):
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        x, p = np.broadcast_arrays(x, p)
        w, dw = _thrust_dir(x)
        pv = p[..., 6:9]
        wp = (w * pv).sum(axis=-1)
        out = np.zeros_like(x)
        for i, d in enumerate(dw):
            out[..., 3 + i] = 2.0 * k * wp * (d * pv).sum(axis=-1)
        out[..., 6:12] = p[..., 0:6]
        return out

    def grad_p(x, p, s=0.0):
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        x, p = np.broadcast_arrays(x, p)
        w, _ = _thrust_dir(x)
        wp = (w * p[..., 6:9]).sum(axis=-1)
        out = np.empty_like(p)
        out[..., 0:6] = x[..., 6:12]
        out[..., 6:9] = 2.0 * k * wp[..., None] * w
        out[..., 8] -= gravity
        out[..., 9:12] = 0.5 * p[..., 9:12]
        return out

    p_rule = ProxRule("gradient-step", grad=lambda p, c: grad_p(c.x, p, c.s))
    x_rule = ProxRule("gradient-step", grad=lambda x, c: -grad_x(x, c.p, c.s))
    g = DiagQuadratic(-0.5, (0.2,) + (1.0,) * 11)
    return ControlProblem(12, H, grad_x, grad_p, p_rule, x_rule,
                          InitialData.from_quadratic(g), name="quadcopter")


# ---------------------------------------------------------------- registry

def _cfg(sigma, delta, **kw):
    return PdhgConfig(sigma=sigma, tau=TAU_BUDGET / sigma, delta=delta, **kw)


@dataclass(frozen=True)
class RegistryEntry:
    """Constructor plus defaults for one named problem.

    ``solver`` is one of ``lax-oc``, ``hopf-oc``, ``lax-dg``, ``hopf-dg``;
    ``sigma_rule(target, t)`` gives the per-point sigma (``None`` keeps the
    config's).  ``make(dim)`` builds the problem; ``dim`` matters only for
    the dimension-generic eikonal family.
    """

    name: str
    make: Callable
    solver: str
    config: PdhgConfig
    default_dim: int
    sigma_rule: Optional[Callable] = None
    dims_fixed: bool = True
    notes: str = ""

    def build(self, dim: Optional[int] = None):
        if dim is not None and self.dims_fixed and dim != self.default_dim:
            raise ConfigError(f"problem {self.name!r} has fixed dimension {self.default_dim}")
        return self.make(self.default_dim if dim is None else dim)


REGISTRY = {
    "eikonal+": RegistryEntry("eikonal+", lambda d: eikonal_plus(d), "lax-oc", _cfg(50.0, 0.02), 2,
                              sigma_rule=lambda x, t: eikonal_sigma(x), dims_fixed=False),
    "eikonal-": RegistryEntry("eikonal-", lambda d: eikonal_minus(d), "lax-oc", _cfg(100.0, 0.02), 2,
                              dims_fixed=False),
    "eikonal-t": RegistryEntry("eikonal-t", lambda d: eikonal_time(d), "lax-oc", _cfg(50.0, 0.02), 2,
                               sigma_rule=lambda x, t: eikonal_sigma(x), dims_fixed=False),
    "diffnorms2": RegistryEntry("diffnorms2", lambda d: diff_norms(1, 1), "lax-dg",
                                _cfg(50.0, 0.02, restart_policy="bump-sigma", max_restarts=3), 2),
    "diffnorms7": RegistryEntry("diffnorms7", lambda d: diff_norms(1, 6), "lax-dg",
                                _cfg(50.0, 0.02, restart_policy="bump-sigma", max_restarts=3), 7),
    "isaacs": RegistryEntry("isaacs", lambda d: isaacs("convex"), "lax-dg",
                            _cfg(20.0, 0.005, value_tol=1e-6, value_check="always",
                                 restart_policy="reinit", max_restarts=1), 2),
    "isaacs-cc": RegistryEntry("isaacs-cc", lambda d: isaacs("convex_concave"), "hopf-dg",
                               _cfg(2.0, 0.005, restart_policy="reinit", max_restarts=1), 2,
                               sigma_rule=lambda x, t: isaacs_sigma(x, t)),
    "quadcopter": RegistryEntry("quadcopter", lambda d: quadcopter(), "hopf-oc", _cfg(5.0, 0.005), 12),
}


def get_problem(name: str) -> RegistryEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None
