"""End-to-end power and rate allocation algorithms.

Five strategies share one result shape:

* ``a_coupled`` / ``b_coupled``: alternate between the closed-form KKT
  power split at fixed rates and a cutting-plane search over rates at
  fixed powers, against the tighter (``d_a``) or looser (``d_b``) bound.
  The looser variant never performs a fused-covariance solve.
* ``a_decoupled`` / ``b_decoupled``: closed-form rates from the
  quantization-noise term alone, spending an effective bit budget found by
  a one-dimensional search (extra bits stop paying once channel errors
  dominate), then the closed-form power split.
* ``uniform``: the even-split baseline.

Continuous rate solutions migrate to integers one sensor per round: under
budget slack the smallest remaining rate is rounded whichever way scores
better, under a tight budget the largest is rounded up, and after every
fix the continuous allocator re-runs on the reduced budget over the
not-yet-fixed sensors with all powers reallocated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bounds, ellipsoid
from .bounds import Allocation, BoundReport, evaluate_bounds, solve_counter
from .model import DerivedStats, NetworkModel, derive_stats
from .poweralloc import WaterfillInput, kkt_power

ALGORITHMS = ("a_coupled", "b_coupled", "a_decoupled", "b_decoupled", "uniform")

BUDGET_TIGHT_TOL = 1e-9


@dataclass(frozen=True)
class AllocatorConfig:
    """Knobs shared by every allocation algorithm.

    ``eta`` is the outer-loop improvement threshold; when omitted it
    defaults to 1e-6 times the prior trace so it scales across models.
    """

    algorithm: str = "a_coupled"
    eta: float | None = None
    j_max: int = 50
    ellipsoid_eps: float = 1e-6
    ellipsoid_i_max: int | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")


@dataclass
class DiscretizeState:
    """Progress of the continuous-to-integer migration."""

    fixed: dict[int, int] = field(default_factory=dict)
    remaining_budget: float = 0.0


@dataclass(frozen=True)
class ContinuousSolution:
    """Continuous-rate solution of one algorithm plus run diagnostics."""

    allocation: Allocation
    report: BoundReport
    outer_iterations: int
    capped: bool = False
    b_opt: int | None = None
    trace: tuple = ()
    outer_values: tuple = ()
    loop_linear_solves: int = 0


@dataclass(frozen=True)
class AllocatorRun:
    """Continuous and integer-rate outcomes of one algorithm on one model."""

    algorithm: str
    continuous: ContinuousSolution
    allocation: Allocation
    report: BoundReport
    b_opt: int | None = None


def _eta_value(cfg: AllocatorConfig, stats: DerivedStats) -> float:
    return cfg.eta if cfg.eta is not None else 1e-6 * stats.trace_prior


def _solve_powers(stats: DerivedStats, rates: np.ndarray, p_tot: float,
                  variant: str) -> np.ndarray:
    """KKT power split at fixed rates; zero rates get zero power."""
    rates = np.asarray(rates, dtype=float)
    if variant == "a":
        weights = bounds.alpha_weights(stats, rates)
    else:
        weights = stats.tau**2
    try:
        sol = kkt_power(WaterfillInput(weights, stats.cnr, rates, p_tot))
    except ValueError:
        return np.zeros(rates.size)
    return sol.powers


def _bound_value(stats: DerivedStats, alloc: Allocation, variant: str) -> float:
    return bounds.d_a(stats, alloc) if variant == "a" else bounds.d_b(stats, alloc)


def _subset_stats(stats: DerivedStats, idx: np.ndarray) -> DerivedStats:
    """Restriction of the derived statistics to a sensor subset."""
    if idx.size == stats.K:
        return stats
    cxx = stats.cxx[np.ix_(idx, idx)]
    cxtheta = stats.cxtheta[idx]
    return DerivedStats(
        cxx=cxx,
        cxtheta=cxtheta,
        cnr=stats.cnr[idx],
        lambda_min_cxx=float(np.linalg.eigvalsh(cxx)[0]),
        lambda_max_cross=float(np.linalg.eigvalsh(cxtheta @ cxtheta.T)[-1]),
        delta_weights=stats.delta_weights[idx],
        d0=stats.d0,
        tau=stats.tau[idx],
        trace_prior=stats.trace_prior,
        K=int(idx.size),
        q=stats.q,
    )


def _run_coupled(model: NetworkModel, stats: DerivedStats, cfg: AllocatorConfig,
                 variant: str, fixed_rates: dict[int, float] | None = None,
                 budget: float | None = None) -> ContinuousSolution:
    """Alternate the power split and the rate search until the bound settles.

    ``fixed_rates`` pins some sensors at given (integer) rates; the
    cutting-plane search then runs over the remaining sensors only, with
    the budget applying to them alone.  Power is always reallocated across
    all transmitting sensors.  The bound value at successive outer iterates
    never increases: a worsening step is rejected and the loop stops.
    """
    K = model.K
    fixed = dict(fixed_rates or {})
    free = np.asarray([k for k in range(K) if k not in fixed], dtype=int)
    budget = float(model.b_tot) if budget is None else float(budget)
    eta = _eta_value(cfg, stats)

    solves_before = solve_counter.count

    def full_rates(free_vec: np.ndarray) -> np.ndarray:
        rates = np.zeros(K)
        rates[free] = free_vec
        for k, v in fixed.items():
            rates[k] = v
        return rates

    searchable = free.size > 0 and budget > max(ellipsoid.RATE_FLOOR * free.size, 0.0)
    if not searchable:
        rates = full_rates(np.zeros(free.size))
        powers = _solve_powers(stats, rates, model.p_tot, variant)
        alloc = Allocation(rates, powers)
        value = _bound_value(stats, alloc, variant)
        return ContinuousSolution(
            allocation=alloc, report=evaluate_bounds(stats, alloc),
            outer_iterations=0,
            loop_linear_solves=solve_counter.count - solves_before)

    # Sensors pinned at zero rate never transmit; drop them from the matrices.
    act = np.asarray(sorted(set(free.tolist())
                            | {k for k, v in fixed.items() if v > 0}), dtype=int)
    sub = _subset_stats(stats, act)
    free_pos = np.searchsorted(act, free)
    fixed_pos = {int(np.searchsorted(act, k)): v for k, v in fixed.items() if v > 0}
    i_max = cfg.ellipsoid_i_max if cfg.ellipsoid_i_max is not None else 200 * free.size

    def sub_rates(free_vec: np.ndarray) -> np.ndarray:
        rates = np.zeros(act.size)
        rates[free_pos] = free_vec
        for pos, v in fixed_pos.items():
            rates[pos] = v
        return rates

    def grad_fn_factory(sub_powers: np.ndarray):
        grad = bounds.grad_da_rates if variant == "a" else bounds.grad_db_rates

        def grad_fn(free_vec: np.ndarray) -> np.ndarray:
            alloc = Allocation(sub_rates(free_vec), sub_powers)
            return grad(sub, alloc)[free_pos]

        return grad_fn

    def obj_fn_factory(sub_powers: np.ndarray):
        def obj_fn(free_vec: np.ndarray) -> float:
            rates = sub_rates(free_vec)
            powers = np.where(rates > 0, sub_powers, 0.0)
            return _bound_value(sub, Allocation(rates, powers), variant)

        return obj_fn

    def outer_value(free_vec: np.ndarray):
        """Re-optimized powers and bound value for one rate split."""
        rates = sub_rates(free_vec)
        powers = _solve_powers(sub, rates, model.p_tot, variant)
        return powers, _bound_value(sub, Allocation(rates, powers), variant)

    free_vec = np.full(free.size, budget / 2.0)
    powers, value = outer_value(free_vec)
    best = (free_vec, powers, value)
    outer_values = [value]
    iterations = 0
    capped = True
    for _ in range(cfg.j_max):
        # Powers with zero rate stay zero, so masking is safe for the search.
        sub_powers = best[1]
        result = ellipsoid.solve(obj_fn_factory(sub_powers),
                                 grad_fn_factory(sub_powers),
                                 budget, free.size,
                                 eps=cfg.ellipsoid_eps, i_max=i_max)
        iterations += 1
        # The bound is not jointly convex: spending the whole budget on one
        # sensor can beat any interior split, and the cutting-plane search at
        # stale powers cannot see that.  Score each concentration corner with
        # its own re-optimized powers and keep the best full iterate.
        candidates = [result.rates]
        if free.size > 1:
            candidates.extend(budget * np.eye(free.size))
        free_vec, powers, value = None, None, np.inf
        for cand in candidates:
            cand_powers, cand_value = outer_value(cand)
            if cand_value < value:
                free_vec, powers, value = cand, cand_powers, cand_value
        if value > best[2]:
            capped = False
            break
        improvement = best[2] - value
        best = (free_vec, powers, value)
        outer_values.append(value)
        if improvement < eta:
            capped = False
            break

    rates = full_rates(best[0])
    powers = np.zeros(K)
    powers[act] = best[1]
    loop_solves = solve_counter.count - solves_before
    alloc = Allocation(rates, powers)
    return ContinuousSolution(
        allocation=alloc, report=evaluate_bounds(stats, alloc),
        outer_iterations=iterations, capped=capped,
        outer_values=tuple(outer_values),
        loop_linear_solves=loop_solves)


def decoupled_rates(stats: DerivedStats, b: float) -> np.ndarray:
    """Closed-form rate split that minimizes the quantization-noise term.

    Each sensor gets b/K plus half the log-ratio of its weight
    delta_k tau_k^2 to the geometric mean of the weights; sensors whose
    share comes out negative are dropped and the budget re-spread over the
    survivors, so the budget is always exhausted over the active set.
    """
    if b < 1:
        raise ValueError("bit budget must be at least 1")
    w = stats.delta_weights * stats.tau**2
    rates = np.zeros(stats.K)
    active = [k for k in range(stats.K) if w[k] > 0]
    while active:
        logw = np.log2(w[active])
        shares = b / len(active) + 0.5 * (logw - np.mean(logw))
        if shares.min() > 0:
            rates[active] = shares
            break
        active.pop(int(np.argmin(shares)))
    return rates


def _run_decoupled(model: NetworkModel, stats: DerivedStats, cfg: AllocatorConfig,
                   variant: str, fixed_rates: dict[int, float] | None = None,
                   budget: float | None = None) -> ContinuousSolution:
    """One-dimensional search for the bit budget actually worth spending.

    Walks the integer budget upward from one bit, recording a (budget,
    quantization term, channel term, total) trace.  For the tighter bound
    the first worsening budget ends the walk and its predecessor wins; the
    looser bound uses a patience window (see the inline note) and the best
    budget wins.  The looser variant evaluates nothing that needs a fused
    solve.
    """
    K = model.K
    fixed = dict(fixed_rates or {})
    free = np.asarray([k for k in range(K) if k not in fixed], dtype=int)
    budget = float(model.b_tot) if budget is None else float(budget)
    budget_int = int(math.floor(budget + BUDGET_TIGHT_TOL))

    solves_before = solve_counter.count

    def full_rates(free_vec: np.ndarray) -> np.ndarray:
        rates = np.zeros(K)
        if free.size:
            rates[free] = free_vec
        for k, v in fixed.items():
            rates[k] = v
        return rates

    free_sub = _subset_stats(stats, free) if free.size else None

    def components(alloc: Allocation):
        if variant == "a":
            term1 = bounds.d1(stats, alloc.rates)
            term2 = bounds.d2_upb(stats, alloc)
        else:
            term1 = bounds.d1_upb(stats, alloc.rates)
            term2 = bounds.d2_uupb(stats, alloc)
        return term1, term2

    def evaluate(shares: np.ndarray):
        rates = full_rates(shares)
        powers = _solve_powers(stats, rates, model.p_tot, variant)
        alloc = Allocation(rates, powers)
        term1, term2 = components(alloc)
        return alloc, term1, term2, term1 + term2

    if free.size == 0 or budget_int < 1:
        alloc, term1, term2, total = evaluate(np.zeros(free.size))
        return ContinuousSolution(
            allocation=alloc, report=evaluate_bounds(stats, alloc),
            outer_iterations=0, b_opt=0,
            trace=((0, term1, term2, total),),
            loop_linear_solves=solve_counter.count - solves_before)

    # The tighter bound varies smoothly as sensors activate along the walk,
    # so the first worsening step ends it.  The looser bound can blip upward
    # at an activation (a new sensor enters the trace-inequality denominator
    # with a large noise term), so that walk only stops after a full window
    # of budgets without a new best, and the best budget wins.
    patience = None if variant == "a" else free.size + 1
    trace = []
    prev = None
    b_opt = budget_int
    best_b = None
    best_total = np.inf
    solutions = {}
    for b in range(1, budget_int + 1):
        alloc, term1, term2, total = evaluate(decoupled_rates(free_sub, b))
        trace.append((b, term1, term2, total))
        solutions[b] = (alloc, total)
        if total < best_total:
            best_b, best_total = b, total
        if patience is None:
            if prev is not None and total > prev:
                b_opt = b - 1
                break
            prev = total
            b_opt = b
        else:
            if b - best_b >= patience:
                b_opt = best_b
                break
            b_opt = best_b

    alloc, _ = solutions[b_opt]
    loop_solves = solve_counter.count - solves_before
    return ContinuousSolution(
        allocation=alloc, report=evaluate_bounds(stats, alloc),
        outer_iterations=len(trace), b_opt=b_opt, trace=tuple(trace),
        loop_linear_solves=loop_solves)


def uniform_baseline(model: NetworkModel,
                     stats: DerivedStats | None = None) -> Allocation:
    """Even split: floor(B/K) bits each with the remainder to the lowest
    indices, and the power budget shared equally among transmitting sensors."""
    stats = stats if stats is not None else derive_stats(model)
    base, rem = divmod(int(model.b_tot), model.K)
    rates = np.full(model.K, float(base))
    rates[:rem] += 1.0
    powers = np.zeros(model.K)
    act = rates > 0
    powers[act] = model.p_tot / int(np.sum(act))
    return Allocation(rates, powers)


def _continuous_runner(algorithm: str):
    variant = "a" if algorithm.startswith("a_") else "b"
    runner = _run_decoupled if "decoupled" in algorithm else _run_coupled
    return runner, variant


def run_a_coupled(model: NetworkModel, cfg: AllocatorConfig | None = None,
                  stats: DerivedStats | None = None) -> ContinuousSolution:
    cfg = cfg or AllocatorConfig(algorithm="a_coupled")
    stats = stats if stats is not None else derive_stats(model)
    return _run_coupled(model, stats, cfg, "a")


def run_b_coupled(model: NetworkModel, cfg: AllocatorConfig | None = None,
                  stats: DerivedStats | None = None) -> ContinuousSolution:
    cfg = cfg or AllocatorConfig(algorithm="b_coupled")
    stats = stats if stats is not None else derive_stats(model)
    return _run_coupled(model, stats, cfg, "b")


def run_a_decoupled(model: NetworkModel, cfg: AllocatorConfig | None = None,
                    stats: DerivedStats | None = None) -> ContinuousSolution:
    cfg = cfg or AllocatorConfig(algorithm="a_decoupled")
    stats = stats if stats is not None else derive_stats(model)
    return _run_decoupled(model, stats, cfg, "a")


def run_b_decoupled(model: NetworkModel, cfg: AllocatorConfig | None = None,
                    stats: DerivedStats | None = None) -> ContinuousSolution:
    cfg = cfg or AllocatorConfig(algorithm="b_decoupled")
    stats = stats if stats is not None else derive_stats(model)
    return _run_decoupled(model, stats, cfg, "b")


def discretize(model: NetworkModel, cfg: AllocatorConfig,
               continuous: Allocation,
               stats: DerivedStats | None = None) -> tuple[Allocation, DiscretizeState]:
    """Migrate a continuous rate solution to integers, one sensor per round.

    Budget slack means bandwidth was not the binding constraint, so the
    weakest remaining sensor (smallest continuous rate, lowest index on
    ties) is rounded up or down by bound comparison, with powers re-split
    for each candidate before comparing.  A tight budget means rounding
    anyone up must squeeze the others, so the strongest remaining sensor is
    rounded up.  After each fix the continuous allocator re-runs over the
    unfixed sensors on the remaining budget (skipped when the fixed value
    already equals the continuous one).  A final head-to-head against plain
    round-half-up keeps whichever scores better, so the migration never
    loses to naive rounding.
    """
    stats = stats if stats is not None else derive_stats(model)
    variant = "a" if cfg.algorithm.startswith("a_") or cfg.algorithm == "uniform" else "b"
    runner, _ = _continuous_runner(cfg.algorithm if cfg.algorithm != "uniform"
                                   else "a_coupled")
    K = model.K
    state = DiscretizeState(fixed={}, remaining_budget=float(model.b_tot))
    current = np.asarray(continuous.rates, dtype=float).copy()

    def scored(rates_vec: np.ndarray):
        powers = _solve_powers(stats, rates_vec, model.p_tot, variant)
        alloc = Allocation(rates_vec, powers)
        return alloc, _bound_value(stats, alloc, variant)

    while len(state.fixed) < K:
        unfixed = [k for k in range(K) if k not in state.fixed]
        fixed_sum = float(sum(state.fixed.values()))
        total = fixed_sum + float(np.sum(current[unfixed]))
        slack = model.b_tot - total
        if slack > BUDGET_TIGHT_TOL:
            j = min(unfixed, key=lambda k: (current[k], k))
            lower = math.floor(current[j] + BUDGET_TIGHT_TOL)
            upper = math.ceil(current[j] - BUDGET_TIGHT_TOL)
            candidates = [lower] if lower == upper else [lower, upper]
            others = float(np.sum(current[unfixed])) - current[j]
            candidates = [v for v in candidates
                          if fixed_sum + v + others <= model.b_tot + BUDGET_TIGHT_TOL]
            best_v, best_score = None, np.inf
            for v in candidates:
                rates_v = current.copy()
                rates_v[j] = v
                _, score = scored(rates_v)
                if score < best_score:
                    best_v, best_score = v, score
            value = int(best_v)
        else:
            j = min(unfixed, key=lambda k: (-current[k], k))
            value = int(math.ceil(current[j] - BUDGET_TIGHT_TOL))

        changed = abs(current[j] - value) > BUDGET_TIGHT_TOL
        state.fixed[j] = value
        current[j] = value
        state.remaining_budget = model.b_tot - float(sum(state.fixed.values()))
        remaining_unfixed = [k for k in range(K) if k not in state.fixed]
        if remaining_unfixed and changed:
            rerun = runner(model, stats, cfg, variant,
                           fixed_rates={k: float(v) for k, v in state.fixed.items()},
                           budget=state.remaining_budget)
            current = np.asarray(rerun.allocation.rates, dtype=float).copy()
            for k, v in state.fixed.items():
                current[k] = v

    final_rates = np.asarray([state.fixed[k] for k in range(K)], dtype=float)
    final_alloc, final_score = scored(final_rates)

    naive_rates = np.floor(np.asarray(continuous.rates, dtype=float) + 0.5)
    if float(np.sum(naive_rates)) <= model.b_tot + BUDGET_TIGHT_TOL:
        naive_alloc, naive_score = scored(naive_rates)
        if naive_score < final_score:
            final_alloc = naive_alloc
            state.fixed = {k: int(naive_rates[k]) for k in range(K)}
            state.remaining_budget = model.b_tot - float(np.sum(naive_rates))

    return final_alloc, state


def run_allocator(model: NetworkModel, cfg: AllocatorConfig,
                  stats: DerivedStats | None = None) -> AllocatorRun:
    """Run one algorithm end to end: continuous phase plus integer migration."""
    stats = stats if stats is not None else derive_stats(model)
    if cfg.algorithm == "uniform":
        alloc = uniform_baseline(model, stats)
        report = evaluate_bounds(stats, alloc)
        cont = ContinuousSolution(allocation=alloc, report=report,
                                  outer_iterations=0)
        return AllocatorRun(algorithm=cfg.algorithm, continuous=cont,
                            allocation=alloc, report=report)

    runner, variant = _continuous_runner(cfg.algorithm)
    cont = runner(model, stats, cfg, variant)
    discrete, _ = discretize(model, cfg, cont.allocation, stats=stats)
    return AllocatorRun(algorithm=cfg.algorithm, continuous=cont,
                        allocation=discrete,
                        report=evaluate_bounds(stats, discrete),
                        b_opt=cont.b_opt)
