"""Proximal operators, quadratic conjugates and the time-difference operators.

All functions broadcast over leading axes; the last axis is the state
dimension.  Bundles are arrays whose second-to-last axis indexes time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiagQuadratic",
    "QuadConjugate",
    "shrink1",
    "shrink2",
    "stretch_quadratic",
    "diag_quad_conjugate",
    "concave_diag_quad_conjugate",
    "apply_D_lax",
    "apply_Dt_lax",
    "apply_D_hopf",
    "apply_Dt_hopf",
    "dense_D",
    "estimate_D_norm",
]

_STRETCH_MARGIN = 1e-12


@dataclass(frozen=True)
class DiagQuadratic:
    """``g(x) = offset + 0.5 * sum(x_i**2 / a_i)`` with ``a_i > 0``."""

    offset: float
    diag: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.diag))
        if not a or min(a) <= 0.0:
            raise ValueError(f"DiagQuadratic needs positive diagonal entries, got {a}")
        object.__setattr__(self, "diag", a)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dim(self) -> int:
        return len(self.diag)

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.diag)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.offset + 0.5 * (x * x / self.a).sum(axis=-1)

    def grad(self, x):
        return np.asarray(x, dtype=float) / self.a

    def prox(self, v, lam):
        """argmin_x g(x) + |x - v|^2 / (2 lam)."""
        lam = np.asarray(lam, dtype=float)
        return np.asarray(v, dtype=float) / (1.0 + lam / self.a)

    def restrict(self, start: int, stop: int, offset: float | None = None) -> "DiagQuadratic":
        return DiagQuadratic(self.offset if offset is None else offset, self.diag[start:stop])


@dataclass(frozen=True)
class QuadConjugate:
    """Value, gradient and prox of a conjugate function.

    ``prox(v, sigma)`` returns ``argmin_p f(p) + |p - v|^2 / (2 sigma)`` for
    the function ``f`` this record describes.
    """

    value: object
    grad: object
    prox: object


def shrink1(v, lam):
    """Coordinate-wise soft threshold (prox of ``lam * |.|_1``)."""
    v = np.asarray(v, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("shrink1 threshold must be non-negative")
    return np.where(v > lam, v - lam, np.where(v < -lam, v + lam, 0.0))


def shrink2(v, lam):
    """Prox of ``lam * |.|_2`` applied along the last axis.

    ``lam`` may carry one value per row (shape ``v.shape[:-1]``) or be
    broadcastable to ``v``.
    """
    v = np.asarray(v, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("shrink2 threshold must be non-negative")
    if lam.ndim and lam.shape == v.shape[:-1]:
        lam = lam[..., None]
    nrm = np.sqrt((v * v).sum(axis=-1))[..., None]
    safe = np.where(nrm > 0.0, nrm, 1.0)
    scale = np.maximum(nrm - lam, 0.0) / safe
    return v * scale


def stretch_quadratic(v, tau, g: DiagQuadratic):
    """Prox of the concave quadratic ``-g``: ``v_i / (1 - tau / a_i)``.

    Raises ``ValueError`` when ``tau >= min(a)``, where ``-g + |x-v|^2/(2 tau)``
    has no minimizer.
    """
    tau_max = float(np.max(tau))
    if tau_max >= min(g.diag) - _STRETCH_MARGIN:
        raise ValueError(
            f"stretch needs tau < min(a) = {min(g.diag)}; got tau = {tau_max}"
        )
    return np.asarray(v, dtype=float) / (1.0 - np.asarray(tau, dtype=float) / g.a)


def diag_quad_conjugate(g: DiagQuadratic) -> QuadConjugate:
    """Convex conjugate of ``offset + 0.5 <A^-1 x, x>``.

    ``g*(p) = -offset + 0.5 <A p, p>``, ``grad g*(p) = A p`` and
    ``prox_{sigma g*}(v)_i = v_i / (1 + sigma a_i)``.
    """
    a = g.a
    c = g.offset

    def value(p):
        p = np.asarray(p, dtype=float)
        return -c + 0.5 * (a * p * p).sum(axis=-1)

    def grad(p):
        return a * np.asarray(p, dtype=float)

    def prox(v, sigma):
        return np.asarray(v, dtype=float) / (1.0 + np.asarray(sigma, dtype=float) * a)

    return QuadConjugate(value, grad, prox)


def concave_diag_quad_conjugate(q: DiagQuadratic) -> QuadConjugate:
    """Concave conjugate of ``h = -q`` (``h_*(r) = inf_y <r, y> - h(y)``).

    ``h_*(r) = q.offset - 0.5 <B r, r>``.  The returned ``prox`` acts on the
    convex function ``u -> -h_*(-u)``, which is what the games Hopf update
    minimizes in its first costate slot.
    """
    b = q.a
    c = q.offset

    def value(r):
        r = np.asarray(r, dtype=float)
        return c - 0.5 * (b * r * r).sum(axis=-1)

    def grad(r):
        return -b * np.asarray(r, dtype=float)

    def prox(v, sigma):
        return np.asarray(v, dtype=float) / (1.0 + np.asarray(sigma, dtype=float) * b)

    return QuadConjugate(value, grad, prox)


def _check_bundle(b):
    b = np.asarray(b, dtype=float)
    if b.ndim < 2:
        raise ValueError(f"bundle must have a time axis and a state axis, got shape {b.shape}")
    return b


def apply_D_lax(x):
    """Backward difference on a Lax bundle (rows 0..N): row 0 is zero."""
    x = _check_bundle(x)
    out = np.zeros_like(x)
    out[..., 1:, :] = x[..., 1:, :] - x[..., :-1, :]
    return out


def apply_Dt_lax(p):
    """Adjoint of :func:`apply_D_lax`: ``p_j - p_{j+1}`` and ``p_N`` at the end."""
    p = _check_bundle(p)
    out = np.empty_like(p)
    out[..., :-1, :] = p[..., :-1, :] - p[..., 1:, :]
    out[..., -1, :] = p[..., -1, :]
    return out


def apply_D_hopf(p):
    """Hopf difference on costates (rows 1..N): ``p_j - p_{j+1}``, last row ``p_N``."""
    return apply_Dt_lax(p)


def apply_Dt_hopf(x):
    """Adjoint of :func:`apply_D_hopf`: forward difference with ``x_0 = 0``."""
    x = _check_bundle(x)
    out = np.empty_like(x)
    out[..., 0, :] = x[..., 0, :]
    out[..., 1:, :] = x[..., 1:, :] - x[..., :-1, :]
    return out


def dense_D(n_rows: int, dim: int, scheme: str) -> np.ndarray:
    """Materialized block difference matrix; only used for checks."""
    eye = np.eye(dim)
    D = np.zeros((n_rows * dim, n_rows * dim))
    if scheme == "lax":
        for j in range(1, n_rows):
            D[j * dim:(j + 1) * dim, (j - 1) * dim:j * dim] = -eye
            D[j * dim:(j + 1) * dim, j * dim:(j + 1) * dim] = eye
    elif scheme == "hopf":
        for j in range(n_rows):
            D[j * dim:(j + 1) * dim, j * dim:(j + 1) * dim] = eye
            if j + 1 < n_rows:
                D[j * dim:(j + 1) * dim, (j + 1) * dim:(j + 2) * dim] = -eye
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return D


def estimate_D_norm(N: int, dim: int = 1, scheme: str = "lax",
                    iters: int = 200, tol: float = 1e-10, seed: int = 0) -> float:
    """Largest singular value of D acting on the free variables.

    With the terminal state pinned, the Lax operator maps ``x_0..x_{N-1}``
    to ``N`` difference rows and the Hopf operator is the ``N x N`` upper
    bidiagonal matrix; both are square bidiagonal with the same spectrum.
    ``scheme`` is accepted for symmetry with the solvers.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if scheme not in ("lax", "hopf"):
        raise ValueError(f"unknown scheme {scheme!r}")
    v = np.random.default_rng(seed).standard_normal((N, dim))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply_D_hopf(apply_Dt_hopf(v))
        nw = np.linalg.norm(w)
        v = w / nw
        if abs(nw - lam) <= tol * nw:
            lam = nw
            break
        lam = nw
    return float(np.sqrt(lam))
