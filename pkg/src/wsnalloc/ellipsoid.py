"""Cutting-plane minimization over the rate simplex.

The feasible set is {L : sum L_k <= budget, L_k >= 0}.  Starting from a
ball that circumscribes it, each iteration halves the current ellipsoid
through its center: with an objective-gradient cut when the center is
feasible, with the all-ones cut when the rate sum overshoots, and with a
negated coordinate cut when some rate falls below the floor.  The center
of the minimum-volume ellipsoid covering the kept half becomes the next
iterate.  Centers do not descend monotonically, so the best feasible
center seen (the incumbent) is what gets returned.

Rates below ``RATE_FLOOR`` are treated as infeasible so objective and
gradient evaluations stay finite; the one-dimensional case has no valid
ellipsoid update and falls back to golden-section search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

RATE_FLOOR = 1e-5
DEFAULT_EPS = 1e-6
DEGENERATE_CUT = 1e-300

CUT_OBJECTIVE = "objective"
CUT_RATE_SUM = "rate_sum"
CUT_NONNEG = "nonneg"


@dataclass
class EllipsoidState:
    """Center, shape matrix and bookkeeping of one solver run."""

    center: np.ndarray
    shape: np.ndarray
    iterations: int = 0
    best_rates: np.ndarray | None = None
    best_objective: float = np.inf


@dataclass(frozen=True)
class EllipsoidResult:
    rates: np.ndarray
    objective: float
    iterations: int
    converged: bool
    feasible_found: bool


def init_state(b_tot: float, n_dims: int) -> EllipsoidState:
    """Ball centered at (budget/2) * ones with radius (budget/2) * sqrt(K).

    That sphere circumscribes the whole simplex (it passes through the
    origin and every axis vertex), so the minimizer starts inside.
    """
    if n_dims < 2:
        raise ValueError("use bisection path")
    center = np.full(n_dims, b_tot / 2.0)
    radius = (b_tot / 2.0) * np.sqrt(n_dims)
    shape = np.eye(n_dims) * radius**2
    return EllipsoidState(center=center, shape=shape)


def select_cut(center: np.ndarray, b_tot: float,
               grad_fn: Callable[[np.ndarray], np.ndarray],
               rate_floor: float = RATE_FLOOR):
    """Pick the cut direction at a center: feasibility first, else objective."""
    low = np.flatnonzero(center < rate_floor)
    if low.size > 0:
        grad = np.zeros(center.size)
        grad[low[0]] = -1.0
        return grad, CUT_NONNEG
    if np.sum(center) > b_tot:
        return np.ones(center.size), CUT_RATE_SUM
    return np.asarray(grad_fn(center), dtype=float), CUT_OBJECTIVE


def step(state: EllipsoidState, grad: np.ndarray) -> EllipsoidState:
    """One minimum-volume update; shrinks det(shape) by a fixed factor."""
    n = state.center.size
    s_grad = state.shape @ grad
    norm_sq = float(grad @ s_grad)
    if not norm_sq > DEGENERATE_CUT:
        raise ValueError("degenerate cut")
    g_tilde = s_grad / np.sqrt(norm_sq)
    center = state.center - g_tilde / (n + 1)
    shape = (n**2 / (n**2 - 1.0)) * (
        state.shape - (2.0 / (n + 1)) * np.outer(g_tilde, g_tilde)
    )
    shape = 0.5 * (shape + shape.T)
    return EllipsoidState(center=center, shape=shape,
                          iterations=state.iterations + 1,
                          best_rates=state.best_rates,
                          best_objective=state.best_objective)


def _project_to_simplex(point: np.ndarray, b_tot: float,
                        rate_floor: float) -> np.ndarray:
    out = np.clip(point, rate_floor, None)
    total = float(np.sum(out))
    if total > b_tot:
        out *= b_tot / total
    return out


def _golden_section(objective_fn, lo: float, hi: float, eps: float,
                    i_max: int) -> tuple[float, float]:
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = objective_fn(np.asarray([c]))
    fd = objective_fn(np.asarray([d]))
    it = 0
    while b - a > eps and it < i_max:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = objective_fn(np.asarray([c]))
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = objective_fn(np.asarray([d]))
        it += 1
    x = c if fc < fd else d
    f = min(fc, fd)
    return x, f, it


def solve(objective_fn: Callable[[np.ndarray], float],
          grad_fn: Callable[[np.ndarray], np.ndarray],
          b_tot: float, n_dims: int,
          eps: float = DEFAULT_EPS, i_max: int | None = None,
          rate_floor: float = RATE_FLOOR) -> EllipsoidResult:
    """Minimize over the rate simplex; returns the incumbent, never the last center."""
    if i_max is None:
        i_max = 200 * max(n_dims, 1)
    if n_dims == 1:
        lo = min(rate_floor, b_tot)
        x, f, used = _golden_section(objective_fn, lo, b_tot, min(eps, 1e-8), i_max)
        return EllipsoidResult(rates=np.asarray([x]), objective=f,
                               iterations=used, converged=True,
                               feasible_found=True)

    state = init_state(b_tot, n_dims)
    converged = False
    while state.iterations < i_max:
        grad, kind = select_cut(state.center, b_tot, grad_fn, rate_floor)
        if kind == CUT_OBJECTIVE:
            value = float(objective_fn(state.center))
            if value < state.best_objective:
                state.best_objective = value
                state.best_rates = state.center.copy()
        s_grad = state.shape @ grad
        norm_sq = float(grad @ s_grad)
        if not norm_sq > DEGENERATE_CUT:
            break
        # A feasibility cut with a small norm only says the ellipsoid is thin
        # across that constraint; declare convergence on objective cuts alone.
        if kind == CUT_OBJECTIVE and np.sqrt(norm_sq) < eps:
            converged = True
            break
        state = step(state, grad)

    if state.best_rates is None:
        projected = _project_to_simplex(state.center, b_tot, rate_floor)
        return EllipsoidResult(rates=projected,
                               objective=float(objective_fn(projected)),
                               iterations=state.iterations,
                               converged=converged, feasible_found=False)

    rates = np.clip(state.best_rates, 0.0, None)
    total = float(np.sum(rates))
    if total > b_tot:
        rates *= b_tot / total
    return EllipsoidResult(rates=rates, objective=state.best_objective,
                           iterations=state.iterations,
                           converged=converged, feasible_found=True)
