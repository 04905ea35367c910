"""Closed-form KKT power allocation over the transmit-power budget.

Minimizes sum_k w_k L_k exp(-cnr_k P_k / L_k) subject to sum P_k <= p_tot,
P >= 0.  The objective is separable, strictly decreasing and jointly convex
in the powers, so the budget is always exhausted and the stationarity
condition gives the closed form

    P_k = (L_k / cnr_k) * ln(cnr_k w_k / lambda*)   clipped at zero,

with the multiplier fixed by the budget over the final active set.  The
weights are the fused-estimator weights (4 tau^2/3)||g_k||^2 for the
tighter bound and plain tau_k^2 for the looser one; both produce the same
functional form.  The multiplier lives in log domain so very large budgets
cannot overflow.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class WaterfillInput(NamedTuple):
    """Inputs to :func:`kkt_power`; weights w_k, CNRs, rates, power budget."""

    weights: np.ndarray
    cnr: np.ndarray
    rates: np.ndarray
    p_tot: float


class PowerSolution(NamedTuple):
    powers: np.ndarray
    log_multiplier: float
    inactive: np.ndarray


def kkt_power(inp: WaterfillInput) -> PowerSolution:
    """Solve the per-sensor power split by active-set waterfilling.

    Candidates are sorted by ln(cnr_k w_k) descending; whenever the current
    multiplier would drive some member's power negative, the weakest member
    is dropped and the multiplier recomputed.  At most K passes.
    """
    w = np.asarray(inp.weights, dtype=float)
    cnr = np.asarray(inp.cnr, dtype=float)
    rates = np.asarray(inp.rates, dtype=float)
    p_tot = float(inp.p_tot)
    K = w.size
    if p_tot < 0:
        raise ValueError("p_tot must be nonnegative")

    candidates = np.flatnonzero((rates > 0) & (w > 0) & (cnr > 0))
    if candidates.size == 0:
        raise ValueError("no sensor can be activated")

    score = np.log(cnr[candidates] * w[candidates])
    order = candidates[np.argsort(-score, kind="stable")]

    active = list(order)
    log_lam = 0.0
    while active:
        idx = np.asarray(active)
        ratio = rates[idx] / cnr[idx]
        log_lam = (-p_tot + np.sum(ratio * np.log(cnr[idx] * w[idx]))) / np.sum(ratio)
        if np.log(cnr[active[-1]] * w[active[-1]]) >= log_lam:
            break
        active.pop()
    if not active:
        raise ValueError("no sensor can be activated")

    powers = np.zeros(K)
    idx = np.asarray(active)
    powers[idx] = (rates[idx] / cnr[idx]) * (np.log(cnr[idx] * w[idx]) - log_lam)
    powers[powers < 0] = 0.0
    inactive = np.setdiff1d(np.arange(K), idx)
    return PowerSolution(powers=powers, log_multiplier=log_lam, inactive=inactive)


def waterfill_objective(inp: WaterfillInput, powers: np.ndarray) -> float:
    """sum_k w_k L_k exp(-cnr_k P_k / L_k) over sensors with positive rate."""
    w = np.asarray(inp.weights, dtype=float)
    cnr = np.asarray(inp.cnr, dtype=float)
    rates = np.asarray(inp.rates, dtype=float)
    powers = np.asarray(powers, dtype=float)
    act = rates > 0
    with np.errstate(under="ignore"):
        return float(np.sum(w[act] * rates[act]
                            * np.exp(-cnr[act] * powers[act] / rates[act])))


def asymptotic_power(rates, cnr, p_tot: float, active_set) -> np.ndarray:
    """Large-budget limit: P_k proportional to L_k / cnr_k over the active set.

    A sensor with a weaker channel receives more power here, the inverse of
    classic waterfilling.
    """
    rates = np.asarray(rates, dtype=float)
    cnr = np.asarray(cnr, dtype=float)
    act = np.asarray(active_set, dtype=int)
    if act.size == 0:
        raise ValueError("active set is empty")
    powers = np.zeros(rates.size)
    ratio = rates[act] / cnr[act]
    powers[act] = ratio * p_tot / np.sum(ratio)
    return powers


def power_cnr_sensitivity(rate: float, cnr: float, weight: float,
                          log_multiplier: float) -> float:
    """dP/d(cnr) of the closed form with the multiplier held fixed.

    (L / cnr^2) * (1 - ln(cnr w / lambda*)): positive below cnr w = e lambda*
    (waterfilling regime), negative above it (inverse waterfilling).
    """
    return (rate / cnr**2) * (1.0 - (np.log(cnr * weight) - log_multiplier))
