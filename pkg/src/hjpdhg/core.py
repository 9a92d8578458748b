"""Domain types shared by the solvers: time grids, configs, problems, reports."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .operators import DiagQuadratic, QuadConjugate, diag_quad_conjugate, stretch_quadratic

__all__ = [
    "ConfigError",
    "DivergenceError",
    "TimeGrid",
    "make_time_grid",
    "PdhgConfig",
    "TAU_BUDGET",
    "Ctx",
    "ProxRule",
    "InitialData",
    "GameInitialData",
    "ControlProblem",
    "GameProblem",
    "TrajectoryBundle",
    "SolveReport",
    "random_init",
    "check_gradients",
]

# sigma * tau must stay strictly below 1 / 2**2; "tau = 0.25 / sigma" sits on
# the boundary, so registry defaults use this budget instead.
TAU_BUDGET = 0.25 * (1.0 - 1e-6)

STOP_REASONS = ("tol", "value-tol", "max-count", "diverged")
RESTART_POLICIES = ("bump-sigma", "reinit", "accept-at-cap")


class ConfigError(ValueError):
    """Invalid solver configuration or problem set-up."""


class DivergenceError(FloatingPointError):
    """A non-finite value appeared during the iteration."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"iteration diverged (non-finite value) at iteration {iteration}")


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    delta: float
    n_steps: int
    scheme: str = "lax"

    @property
    def indices(self) -> np.ndarray:
        start = 0 if self.scheme == "lax" else 1
        return np.arange(start, self.n_steps + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.indices * self.delta

    @property
    def n_rows(self) -> int:
        return len(self.indices)


def make_time_grid(t_final: float, delta: float, scheme: str = "lax") -> TimeGrid:
    """Uniform grid with ``N = round(t / delta)`` steps (at least one).

    The Lax scheme carries rows ``0..N``, the Hopf scheme rows ``1..N``.  The
    stored step is ``t_final / N`` so that ``s_N == t_final``.
    """
    if scheme not in ("lax", "hopf"):
        raise ConfigError(f"unknown time scheme {scheme!r}")
    if not (t_final > 0 and delta > 0):
        raise ConfigError(f"need t_final > 0 and delta > 0, got {t_final}, {delta}")
    n = max(int(np.floor(t_final / delta + 0.5)), 1)
    return TimeGrid(float(t_final), float(t_final) / n, n, scheme)


@dataclass(frozen=True)
class PdhgConfig:
    """Step sizes, tolerances and restart policy for one point solve.

    ``variant="main"`` feeds the new dual iterate into the state update;
    ``"lagged"`` uses the previous one and is kept for comparison only.
    """

    sigma: float = 50.0
    tau: float = TAU_BUDGET / 50.0
    theta: float = 1.0
    delta: float = 0.02
    tol: float = 1e-8
    max_count: int = 50_000
    seed: int = 0
    init_radius: float = 0.1
    sigma_bump: float = 20.0
    value_tol: float = 0.0
    value_check: str = "cap"
    restart_policy: str = "accept-at-cap"
    max_restarts: int = 3
    variant: str = "main"

    def __post_init__(self):
        if not (self.sigma > 0 and self.tau > 0):
            raise ConfigError(f"sigma and tau must be positive, got {self.sigma}, {self.tau}")
        if self.sigma * self.tau * 4.0 >= 1.0:
            raise ConfigError(
                f"sigma*tau = {self.sigma * self.tau!r} violates sigma*tau*|D|^2 < 1 "
                f"with |D| < 2; need sigma*tau < 0.25"
            )
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.init_radius < 0:
            raise ConfigError("init_radius must be non-negative")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if int(self.max_count) < 1:
            raise ConfigError("max_count must be >= 1")
        if self.value_tol < 0:
            raise ConfigError("value_tol must be non-negative")
        if self.value_check not in ("cap", "always"):
            raise ConfigError(f"value_check must be 'cap' or 'always', got {self.value_check!r}")
        if self.restart_policy not in RESTART_POLICIES:
            raise ConfigError(f"restart_policy must be one of {RESTART_POLICIES}")
        if self.max_restarts < 0:
            raise ConfigError("max_restarts must be non-negative")
        if self.variant not in ("main", "lagged"):
            raise ConfigError(f"variant must be 'main' or 'lagged', got {self.variant!r}")
        if self.sigma_bump < 0:
            raise ConfigError("sigma_bump must be non-negative")

    def replace(self, **changes) -> "PdhgConfig":
        return dataclasses.replace(self, **changes)

    def with_sigma(self, sigma: float) -> "PdhgConfig":
        """New sigma, keeping the product sigma*tau."""
        return self.replace(sigma=sigma, tau=self.sigma * self.tau / sigma)


class Ctx(NamedTuple):
    """Frozen block values seen by a prox rule (unused slots are ``None``)."""

    x: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    qn: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ProxRule:
    """How one block minimizes ``lam * F(u; ctx) + |u - v|^2 / 2`` (scaled).

    ``grad(u, ctx)`` is the gradient of the smooth part of ``F`` and
    ``prox(v, ctx, lam)`` the proximal map of its non-smooth part.
    ``gradient-step`` and ``prox-gradient`` evaluate the gradient at the
    block's current iterate.
    """

    kind: str
    grad: Optional[Callable] = None
    prox: Optional[Callable] = None

    def __post_init__(self):
        if self.kind == "gradient-step" and self.grad is None:
            raise ConfigError("gradient-step rule needs grad")
        if self.kind == "closed-form-prox" and self.prox is None:
            raise ConfigError("closed-form-prox rule needs prox")
        if self.kind == "prox-gradient" and (self.grad is None or self.prox is None):
            raise ConfigError("prox-gradient rule needs grad and prox")
        if self.kind not in ("gradient-step", "closed-form-prox", "prox-gradient"):
            raise ConfigError(f"unknown prox rule kind {self.kind!r}")

    def __call__(self, v, cur, ctx: Ctx, lam):
        if self.kind == "closed-form-prox":
            return self.prox(v, ctx, lam)
        step = v - lam[..., None] * self.grad(cur, ctx)
        if self.kind == "gradient-step":
            return step
        return self.prox(step, ctx, lam)


@dataclass(frozen=True)
class InitialData:
    g: Callable
    grad_g: Callable
    prox_g: Optional[Callable] = None
    conjugate: Optional[QuadConjugate] = None
    quadratic: Optional[DiagQuadratic] = None

    @classmethod
    def from_quadratic(cls, q: DiagQuadratic, negate: bool = False) -> "InitialData":
        """Data ``q`` (with conjugate) or ``-q`` (prox by the stretch operator)."""
        if not negate:
            return cls(q, q.grad, q.prox, diag_quad_conjugate(q), q)
        return cls(
            lambda x: -q(x),
            lambda x: -q.grad(x),
            lambda v, lam: stretch_quadratic(v, lam, q),
            None,
            None,
        )

    def step(self, v, cur, lam):
        """argmin g(u) + |u - v|^2 / (2 lam), or one gradient step if no prox."""
        if self.prox_g is not None:
            return self.prox_g(v, lam)
        return v - lam * self.grad_g(cur)


@dataclass(frozen=True)
class GameInitialData:
    """Data ``g(x, y)``; quadratic problems also expose their block split.

    ``x_step(v, y, lam)`` minimizes ``g(., y) + |. - v|^2/(2 lam)``;
    ``y_step(v, x, lam)`` minimizes ``-g(x, .) + |. - v|^2/(2 lam)``.
    ``convex_part``/``concave_part`` give ``g = e(x) + h(y)`` with ``e``
    a convex and ``h = -concave_part`` a concave quadratic, needed by the
    games Hopf solver.
    """

    g: Callable
    grad_x: Callable
    grad_y: Callable
    x_step: Optional[Callable] = None
    y_step: Optional[Callable] = None
    convex_part: Optional[DiagQuadratic] = None
    concave_part: Optional[DiagQuadratic] = None

    @property
    def separable(self) -> bool:
        return self.convex_part is not None and self.concave_part is not None

    @classmethod
    def stacked_quadratic(cls, q: DiagQuadratic, dim_x: int) -> "GameInitialData":
        """``g(x, y) = q((x, y))``; the ``y`` step is a stretch since ``-g`` is concave in ``y``."""
        qx = q.restrict(0, dim_x, 0.0)
        qy = q.restrict(dim_x, q.dim, 0.0)

        def g(x, y):
            return qx(x) + qy(y) + q.offset

        return cls(
            g,
            lambda x, y: qx.grad(x),
            lambda x, y: qy.grad(y),
            lambda v, y, lam: qx.prox(v, lam),
            lambda v, x, lam: stretch_quadratic(v, lam, qy),
        )

    @classmethod
    def separable_quadratic(cls, e: DiagQuadratic, hq: DiagQuadratic) -> "GameInitialData":
        """``g(x, y) = e(x) - hq(y)``: convex in ``x``, concave in ``y``."""
        return cls(
            lambda x, y: e(x) - hq(y),
            lambda x, y: e.grad(x),
            lambda x, y: -hq.grad(y),
            lambda v, y, lam: e.prox(v, lam),
            lambda v, x, lam: hq.prox(v, lam),
            e,
            hq,
        )


@dataclass(frozen=True)
class ControlProblem:
    """Hamiltonian description of an optimal-control HJE.

    ``negate`` marks a sign-flip reduction: the solver works on this problem
    and reports ``-fval``.  The PDE actually solved is then
    ``phi_t - H(x, -grad phi, t) = 0`` with data ``-g``.
    """

    dim: int
    hamiltonian: Callable
    grad_x_H: Callable
    grad_p_H: Callable
    p_update: ProxRule
    x_update: ProxRule
    initial_data: InitialData
    name: str = ""
    negate: bool = False
    feedback: Optional[Callable] = None

    def pde_hamiltonian(self, x, p, s=0.0):
        p = np.asarray(p, dtype=float)
        if self.negate:
            return -self.hamiltonian(x, -p, s)
        return self.hamiltonian(x, p, s)

    def pde_initial(self, x):
        v = self.initial_data.g(x)
        return -v if self.negate else v


@dataclass(frozen=True)
class GameProblem:
    """Two-player zero-sum game Hamiltonian ``H(x, y, p, q_neg, s)``.

    Costate updates minimize ``delta*H`` over ``p`` and ``-delta*H(., -q)``
    over ``q``; state updates minimize ``-delta*H`` over ``x`` and
    ``+delta*H`` over ``y``.
    """

    dim_x: int
    dim_y: int
    hamiltonian: Callable
    grad_x_H: Callable
    grad_y_H: Callable
    grad_p_H: Callable
    grad_qn_H: Callable
    p_update: ProxRule
    q_update: ProxRule
    x_update: ProxRule
    y_update: ProxRule
    initial_data: GameInitialData
    name: str = ""

    @property
    def dim(self) -> int:
        return self.dim_x + self.dim_y

    def pde_hamiltonian(self, z, grad, s=0.0):
        z = np.asarray(z, dtype=float)
        grad = np.asarray(grad, dtype=float)
        dx = self.dim_x
        return self.hamiltonian(z[..., :dx], z[..., dx:], grad[..., :dx], grad[..., dx:], s)

    def pde_initial(self, z):
        z = np.asarray(z, dtype=float)
        return self.initial_data.g(z[..., :self.dim_x], z[..., self.dim_x:])


@dataclass
class TrajectoryBundle:
    """Time-indexed iterates; rows follow ``grid.indices``."""

    grid: TimeGrid
    x: np.ndarray
    p: np.ndarray
    z: np.ndarray
    y: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    def copy(self) -> "TrajectoryBundle":
        cp = lambda a: None if a is None else a.copy()
        return TrajectoryBundle(self.grid, cp(self.x), cp(self.p), cp(self.z),
                                cp(self.y), cp(self.q), cp(self.w))


@dataclass
class SolveReport:
    fval: float
    iterations: int
    converged: bool
    stop_reason: str
    trajectory: Optional[TrajectoryBundle] = None
    restarts: int = 0
    sigma: float = float("nan")
    tau: float = float("nan")
    total_iterations: int = 0


def _uniform(rng, r, shape):
    d, m = shape[-1], shape[-2]
    # drawn state-major so coordinate k's draws do not depend on the dimension
    return rng.uniform(-r, r, size=(d, m)).T.copy()


def random_init(dims, target, cfg: PdhgConfig, scheme: str = "lax", n_steps: int | None = None,
                rng: np.random.Generator | None = None, t_final: float | None = None):
    """Random starting bundle around ``target`` (pure in its arguments).

    ``dims`` is an int for control problems or a ``(d1, d2)`` pair for games,
    in which case ``target`` is the stacked ``(x, y)`` point.  Either
    ``n_steps`` or ``t_final`` fixes the grid (``t_final`` uses ``cfg.delta``).
    """
    if n_steps is None:
        if t_final is None:
            raise ConfigError("random_init needs n_steps or t_final")
        grid = make_time_grid(t_final, cfg.delta, scheme)
    else:
        grid = TimeGrid(float(n_steps * cfg.delta), float(cfg.delta), int(n_steps), scheme)
    target = np.asarray(target, dtype=float)
    game = not np.isscalar(dims) and len(np.atleast_1d(dims)) == 2
    total = int(sum(dims)) if game else int(dims)
    if target.shape != (total,):
        raise ConfigError(f"target has shape {target.shape}, expected ({total},)")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    r = cfg.init_radius
    m = grid.n_rows

    def states(pt):
        s = pt + _uniform(rng, r, (m, len(pt)))
        s[-1] = pt
        return s

    def costates(d):
        c = _uniform(rng, r, (m, d))
        if scheme == "lax":
            c[0] = 0.0
        return c

    if not game:
        x = states(target)
        p = costates(total)
        return TrajectoryBundle(grid, x, p, x.copy())
    d1, d2 = int(dims[0]), int(dims[1])
    x = states(target[:d1])
    y = states(target[d1:])
    p = costates(d1)
    q = costates(d2)
    return TrajectoryBundle(grid, x, p, x.copy(), y, q, y.copy())


def check_gradients(func, grads, sample, n_points: int = 100, h: float = 1e-6,
                    seed: int = 0, rel_tol: float = 1e-5, abs_floor: float = 1e-7):
    """Compare analytic gradients with central differences.

    ``func(*args)`` is scalar-valued per point; ``grads`` maps an argument
    index to the gradient callable w.r.t. that argument; ``sample(rng)``
    returns a tuple of arguments.  Returns the worst relative error.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        args = [np.array(a, dtype=float) for a in sample(rng)]
        for idx, gfun in grads.items():
            g_an = np.asarray(gfun(*args), dtype=float)
            g_fd = np.zeros_like(args[idx])
            for k in range(args[idx].size):
                up = [a.copy() for a in args]
                dn = [a.copy() for a in args]
                up[idx].flat[k] += h
                dn[idx].flat[k] -= h
                g_fd.flat[k] = (func(*up) - func(*dn)) / (2 * h)
            err = np.linalg.norm(g_an - g_fd) / max(np.linalg.norm(g_fd), np.linalg.norm(g_an), abs_floor)
            if np.linalg.norm(g_an - g_fd) <= abs_floor:
                err = 0.0
            worst = max(worst, float(err))
    return worst
