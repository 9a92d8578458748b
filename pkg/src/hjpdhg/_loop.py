"""Batched PDHG driver shared by the control and games solvers.

A *scheme* owns the update formulas of one algorithm; this module runs many
independent point solves in lock-step on stacked arrays of shape
``(B, rows, dim)``.  Points leave the batch as soon as they stop, and every
per-point reduction is a row-wise sum, so a point's result does not depend
on which other points share its batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    ConfigError,
    DivergenceError,
    PdhgConfig,
    SolveReport,
    TimeGrid,
    TrajectoryBundle,
)


@dataclass(frozen=True)
class Scheme:
    """Update formulas of one splitting algorithm.

    ``step(state, sig, tau)`` maps a dict of stacked blocks to the next
    iterate, with ``sig`` and ``tau`` of shape ``(B, 1)``.  ``fval(state)``
    returns one objective value per point.  ``init(target, rng, cfg)``
    returns the unbatched starting blocks for a single point.
    """

    grid: TimeGrid
    primal: tuple
    dual: tuple
    step: Callable
    fval: Callable
    init: Callable
    bundle: Callable


def _sq(a, b):
    d = a - b
    return (d * d).reshape(d.shape[0], -1).sum(axis=1)


def _rel_change(f_new, f_old):
    return np.abs(f_new - f_old) / np.minimum(np.abs(f_new), 1.0)


def _iterate(scheme: Scheme, state: dict, sig, tau, cfg: PdhgConfig):
    """Run one attempt for every point in ``state``.

    Returns ``(final_state, iterations, reasons, fvals)`` aligned with the
    input batch.
    """
    n = sig.shape[0]
    keys = tuple(state)
    final = {k: np.empty_like(v) for k, v in state.items()}
    iters = np.zeros(n, dtype=np.int64)
    reasons = np.empty(n, dtype=object)
    fvals = np.full(n, np.nan)

    active = np.arange(n)
    cur = state
    sig_a = sig[:, None]
    tau_a = tau[:, None]
    max_count = int(cfg.max_count)
    always = cfg.value_tol > 0 and cfg.value_check == "always"
    at_cap = cfg.value_tol > 0 and cfg.value_check == "cap"
    f_prev = scheme.fval(cur) if always else None
    cap_ok = None
    k = 0
    while active.size:
        k += 1
        # overflow shows up as a non-finite update and is reported as divergence
        with np.errstate(over="ignore", invalid="ignore"):
            new = scheme.step(cur, sig_a, tau_a)
            dprim = sum(_sq(new[b], cur[b]) for b in scheme.primal)
            ddual = sum(_sq(new[b], cur[b]) for b in scheme.dual)
        bad = ~(np.isfinite(dprim) & np.isfinite(ddual))
        done_tol = (dprim < cfg.tol) & (ddual < cfg.tol) & ~bad
        stop = done_tol | bad

        f_new = None
        vt = None
        if always:
            f_new = scheme.fval(new)
            vt = (_rel_change(f_new, f_prev) < cfg.value_tol) & ~stop
            stop = stop | vt
        elif at_cap and k >= max_count - 10:
            f_new = scheme.fval(new)
            if k == max_count - 10:
                cap_ok = np.ones(active.size, dtype=bool)
            else:
                cap_ok &= _rel_change(f_new, f_prev) < cfg.value_tol
        last = k == max_count

        if last or stop.any():
            reason = np.where(done_tol, "tol", "").astype(object)
            reason[bad] = "diverged"
            if vt is not None:
                reason[vt] = "value-tol"
            if last:
                rest = reason == ""
                if at_cap and cap_ok is not None:
                    reason[rest & cap_ok] = "value-tol"
                    rest = reason == ""
                reason[rest] = "max-count"
            stop = reason != ""
            idx = active[stop]
            for key in keys:
                final[key][idx] = new[key][stop]
            iters[idx] = k
            reasons[idx] = reason[stop]
            keep = ~stop
            active = active[keep]
            new = {key: v[keep] for key, v in new.items()}
            sig_a = sig_a[keep]
            tau_a = tau_a[keep]
            if f_new is not None:
                f_new = f_new[keep]
            if cap_ok is not None:
                cap_ok = cap_ok[keep]
        cur = new
        f_prev = f_new

    ok = reasons != "diverged"
    if ok.any():
        sub = {key: v[ok] for key, v in final.items()}
        fvals[ok] = scheme.fval(sub)
    return final, iters, reasons, fvals


def _restart_rng(seed: int, attempt: int):
    if attempt == 0:
        return np.random.default_rng(seed)
    return np.random.default_rng([seed, attempt])


def adapt_sigma(sigma: float, tau: float, cfg: PdhgConfig):
    """Stall response: ``sigma + sigma_bump`` with the product ``sigma*tau`` kept."""
    new_sigma = sigma + cfg.sigma_bump
    return new_sigma, sigma * tau / new_sigma


def _stack(dicts):
    return {k: np.stack([d[k] for d in dicts]) for k in dicts[0]}


def solve_points(scheme: Scheme, targets, cfg: PdhgConfig, seeds: Sequence[int] | None = None,
                 sigmas=None, taus=None, keep_trajectory: bool = True) -> list:
    """Solve every row of ``targets`` with restarts; returns one report each.

    Diverged points get ``stop_reason == "diverged"`` and ``fval = nan``.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = targets.shape[0]
    seeds = [cfg.seed] * n if seeds is None else [int(s) for s in seeds]
    sig = np.full(n, float(cfg.sigma)) if sigmas is None else np.asarray(sigmas, dtype=float).copy()
    tau = np.full(n, float(cfg.tau)) if taus is None else np.asarray(taus, dtype=float).copy()
    if sig.shape != (n,) or tau.shape != (n,) or len(seeds) != n:
        raise ConfigError("per-point seeds/sigmas/taus must match the number of targets")
    if np.any(sig * tau * 4.0 >= 1.0):
        raise ConfigError("sigma*tau must stay below 0.25 at every point")

    reports = [None] * n
    totals = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    attempt = 0
    while pending.size:
        state = _stack([scheme.init(targets[i], _restart_rng(seeds[i], attempt), cfg) for i in pending])
        final, iters, reasons, fvals = _iterate(scheme, state, sig[pending], tau[pending], cfg)
        totals[pending] += iters
        retry = []
        for j, i in enumerate(pending):
            stalled = reasons[j] == "max-count"
            if stalled and cfg.restart_policy != "accept-at-cap" and attempt < cfg.max_restarts:
                if cfg.restart_policy == "bump-sigma":
                    sig[i], tau[i] = adapt_sigma(sig[i], tau[i], cfg)
                retry.append(i)
                continue
            traj = None
            if keep_trajectory and reasons[j] != "diverged":
                traj = scheme.bundle({k: v[j] for k, v in final.items()})
            reports[i] = SolveReport(
                fval=float(fvals[j]),
                iterations=int(iters[j]),
                converged=bool(reasons[j] == "tol"),
                stop_reason=str(reasons[j]),
                trajectory=traj,
                restarts=attempt,
                sigma=float(sig[i]),
                tau=float(tau[i]),
                total_iterations=int(totals[i]),
            )
        pending = np.asarray(retry, dtype=np.int64)
        attempt += 1
    return reports


def solve_one(scheme: Scheme, target, cfg: PdhgConfig, sigma=None, tau=None) -> SolveReport:
    """Single-point solve; raises :class:`DivergenceError` on non-finite iterates."""
    rep = solve_points(scheme, np.asarray(target, dtype=float)[None, :], cfg,
                       sigmas=None if sigma is None else [sigma],
                       taus=None if tau is None else [tau])[0]
    if rep.stop_reason == "diverged":
        raise DivergenceError(rep.iterations)
    return rep


def make_bundle(grid, **blocks) -> TrajectoryBundle:
    return TrajectoryBundle(grid, **blocks)
