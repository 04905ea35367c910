"""Built-in consistency battery behind the ``selftest`` CLI command.

Each check is self-contained (finite differences, small random sweeps,
closed-form identities) and prints one pass/fail line.  This is a quick
field diagnostic, not a replacement for the full test suite.
"""

from __future__ import annotations

import numpy as np

from . import bounds, ellipsoid
from .allocators import decoupled_rates, run_b_coupled
from .bounds import Allocation
from .chansim import SimConfig, bit_error_prob, simulate
from .model import DerivedStats, derive_stats, make_model
from .poweralloc import WaterfillInput, kkt_power, waterfill_objective
from .quantizer import QuantizerSpec, quant_noise_var, quantize_array


def _reference_model(p_tot=1000.0, b_tot=30):
    s = np.sqrt(2.0) / 2.0
    return make_model(prior_cov=[[1.0, s], [s, 2.0]],
                      gains=[[1.0, 0.6, 0.4], [1.0, 0.6, 0.4]],
                      obs_noise_var=[1.0] * 3, channel_gain=[1.0] * 3,
                      channel_noise_var=[1.0] * 3, p_tot=p_tot, b_tot=b_tot)


def _random_setup(rng):
    K = int(rng.integers(2, 6))
    q = int(rng.integers(1, 4))
    m = rng.normal(size=(q, q))
    model = make_model(prior_cov=m @ m.T + (0.3 + rng.random()) * np.eye(q),
                       gains=rng.normal(size=(q, K)),
                       obs_noise_var=rng.uniform(0.3, 2.0, K),
                       channel_gain=rng.uniform(0.5, 2.0, K),
                       channel_noise_var=rng.uniform(0.3, 2.0, K),
                       p_tot=float(rng.uniform(1, 50)),
                       b_tot=int(rng.integers(2, 24)))
    rates = rng.uniform(0.3, 1.0, K)
    rates *= model.b_tot * rng.uniform(0.3, 1.0) / np.sum(rates)
    w = rng.uniform(0.0, 1.0, K)
    powers = w / np.sum(w) * model.p_tot * rng.uniform(0.2, 1.0)
    return model, Allocation(rates, powers)


def check_quantizer_round_trip():
    spec = QuantizerSpec(rate_bits=4, tau=3.0)
    levels = spec.levels()
    xs = np.linspace(-4.0, 4.0, 2001)
    idx = quantize_array(xs, spec)
    err = np.abs(np.clip(xs, -3.0, 3.0) - levels[idx - 1])
    step_ok = bool(np.max(err) <= spec.step / 2 + 1e-12)
    var_ok = abs(quant_noise_var(4, 3.0) - spec.step**2 / 12.0) < 1e-15
    return step_ok and var_ok, f"max reconstruction error {np.max(err):.4g}"


def check_bound_chain():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        model, alloc = _random_setup(rng)
        rep = bounds.evaluate_bounds(derive_stats(model), alloc)
        worst = max(worst,
                    rep.d0 - rep.d_a, rep.d_a - rep.d_b,
                    rep.d1 - rep.d1_upb, rep.d2_upb - rep.d2_uupb)
    return worst <= 1e-9, f"worst ordering violation {worst:.3g}"


def check_gradients():
    model = _reference_model()
    stats = derive_stats(model)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        rates = rng.uniform(1.0, 8.0, 3)
        powers = rng.uniform(0.0, 300.0, 3)
        alloc = Allocation(rates, powers)
        for grad_fn, val_fn in ((bounds.grad_da_rates, bounds.d_a),
                                (bounds.grad_db_rates, bounds.d_b)):
            sig = quant_noise_var(rates, stats.tau)
            low2 = np.sort(sig)[:2]
            if grad_fn is bounds.grad_db_rates \
                    and low2[1] - low2[0] < 1e-3 * low2[1]:
                continue
            grad = grad_fn(stats, alloc)
            for k in range(3):
                hi, lo = rates.copy(), rates.copy()
                hi[k] += 1e-5
                lo[k] -= 1e-5
                fd = (val_fn(stats, Allocation(hi, powers))
                      - val_fn(stats, Allocation(lo, powers))) / 2e-5
                worst = max(worst, abs(grad[k] - fd) / max(abs(fd), 1e-12))
    return worst <= 1e-4, f"worst gradient mismatch {worst:.3g} relative"


def check_power_allocation():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        K = int(rng.integers(1, 7))
        inp = WaterfillInput(rng.uniform(0.05, 5.0, K), rng.uniform(0.1, 4.0, K),
                             rng.uniform(0.5, 8.0, K),
                             float(rng.uniform(0.1, 80.0)))
        sol = kkt_power(inp)
        worst = max(worst, abs(np.sum(sol.powers) - inp.p_tot) / inp.p_tot)
        base = waterfill_objective(inp, np.full(K, inp.p_tot / K))
        if waterfill_objective(inp, sol.powers) > base * (1 + 1e-9):
            return False, "uniform split beat the solver"
    return worst <= 1e-10, f"worst budget mismatch {worst:.3g} relative"


def check_ellipsoid():
    target = np.array([0.8, 1.9, 0.4])
    res = ellipsoid.solve(lambda x: float(np.sum((x - target) ** 2)),
                          lambda x: 2.0 * (x - target), b_tot=6.0, n_dims=3,
                          eps=1e-9, i_max=600)
    gap = float(np.max(np.abs(res.rates - target)))
    return gap <= 1e-3, f"distance to known minimizer {gap:.3g}"


def check_rate_split_budget():
    rng = np.random.default_rng(13)
    worst = 0.0
    for _ in range(40):
        K = int(rng.integers(1, 7))
        stats = DerivedStats(cxx=np.eye(K), cxtheta=np.zeros((K, 1)),
                             cnr=np.ones(K), lambda_min_cxx=1.0,
                             lambda_max_cross=1.0,
                             delta_weights=rng.uniform(0.01, 10.0, K),
                             d0=0.0, tau=rng.uniform(0.5, 5.0, K),
                             trace_prior=1.0, K=K, q=1)
        b = float(rng.integers(1, 25))
        worst = max(worst, abs(np.sum(decoupled_rates(stats, b)) - b))
    return worst <= 1e-9, f"worst budget mismatch {worst:.3g} bits"


def check_solve_free_path():
    model = _reference_model()
    run = run_b_coupled(model)
    ok = run.loop_linear_solves == 0
    return ok, f"{run.loop_linear_solves} fused solves in the loop"


def check_simulation():
    model = _reference_model(p_tot=1e6)
    alloc = Allocation(np.array([6.0, 6.0, 6.0]),
                       np.full(3, model.p_tot / 3.0))
    cfg = SimConfig(trials=40_000, seed=42)
    a = simulate(model, alloc, cfg)
    b = simulate(model, alloc, cfg)
    if a.mse != b.mse:
        return False, "same seed produced different reports"
    stats = derive_stats(model)
    d1_val = bounds.d1(stats, alloc.rates)
    gap = abs(a.mse - d1_val)
    if bit_error_prob(stats.cnr[0], alloc.powers[0], 6.0) > 1e-12:
        return False, "expected an error-free channel at this power"
    return gap <= 3 * a.half_width, \
        f"|mse - quantization-only distortion| = {gap:.3g}"


CHECKS = [
    ("quantizer round trip", check_quantizer_round_trip),
    ("bound ordering chain", check_bound_chain),
    ("analytic gradients vs finite differences", check_gradients),
    ("power allocation budget and optimality", check_power_allocation),
    ("cutting-plane solver on known minimizer", check_ellipsoid),
    ("closed-form rate split budget identity", check_rate_split_budget),
    ("looser-bound path is solve-free", check_solve_free_path),
    ("simulator determinism and consistency", check_simulation),
]


def run_selftest(verbose: bool = True) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
