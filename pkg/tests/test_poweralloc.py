import numpy as np
import pytest

from wsnalloc.poweralloc import (WaterfillInput, asymptotic_power, kkt_power,
                                 power_cnr_sensitivity, waterfill_objective)

from oracles import central_difference, projected_gradient_power


def test_single_sensor_takes_all_power():
    sol = kkt_power(WaterfillInput(np.array([1.0]), np.array([1.0]),
                                   np.array([2.0]), 5.0))
    assert sol.powers == pytest.approx([5.0])
    assert sol.inactive.size == 0


def test_two_identical_sensors_split_evenly():
    inp = WaterfillInput(np.array([1.3, 1.3]), np.array([0.7, 0.7]),
                         np.array([3.0, 3.0]), 8.0)
    sol = kkt_power(inp)
    assert sol.powers == pytest.approx([4.0, 4.0], rel=1e-12)


def test_budget_exhausted_exactly():
    rng = np.random.default_rng(2)
    for _ in range(50):
        K = int(rng.integers(1, 8))
        inp = WaterfillInput(rng.uniform(0.05, 5.0, K), rng.uniform(0.1, 4.0, K),
                             rng.uniform(0.5, 8.0, K), float(rng.uniform(0.1, 100.0)))
        sol = kkt_power(inp)
        assert np.sum(sol.powers) == pytest.approx(inp.p_tot, rel=1e-10)
        assert np.all(sol.powers >= 0)


def test_zero_rate_and_zero_weight_sensors_get_nothing():
    inp = WaterfillInput(np.array([1.0, 0.0, 1.0]), np.array([1.0, 1.0, 1.0]),
                         np.array([2.0, 2.0, 0.0]), 6.0)
    sol = kkt_power(inp)
    assert sol.powers[1] == 0.0
    assert sol.powers[2] == 0.0
    assert np.sum(sol.powers) == pytest.approx(6.0)
    assert set(sol.inactive.tolist()) == {1, 2}


def test_all_inactive_raises():
    with pytest.raises(ValueError, match="no sensor"):
        kkt_power(WaterfillInput(np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                                 np.array([2.0, 0.0]), 4.0))


def test_kkt_matches_projected_gradient_oracle():
    rng = np.random.default_rng(19)
    for _ in range(30):
        K = 3
        inp = WaterfillInput(rng.uniform(0.05, 5.0, K), rng.uniform(0.1, 4.0, K),
                             rng.uniform(0.5, 8.0, K), float(rng.uniform(0.5, 60.0)))
        sol = kkt_power(inp)
        _, f_oracle = projected_gradient_power(inp.weights, inp.cnr,
                                               inp.rates, inp.p_tot)
        f_kkt = waterfill_objective(inp, sol.powers)
        assert f_kkt <= f_oracle * (1 + 1e-6) + 1e-12


def test_kkt_multiplier_fixed_point():
    rng = np.random.default_rng(7)
    for _ in range(20):
        K = int(rng.integers(2, 6))
        inp = WaterfillInput(rng.uniform(0.05, 5.0, K), rng.uniform(0.1, 4.0, K),
                             rng.uniform(0.5, 8.0, K), float(rng.uniform(0.5, 40.0)))
        sol = kkt_power(inp)
        act = np.setdiff1d(np.arange(K), sol.inactive)
        ratio = inp.rates[act] / inp.cnr[act]
        lhs = sol.log_multiplier * np.sum(ratio)
        rhs = -inp.p_tot + np.sum(ratio * np.log(inp.cnr[act] * inp.weights[act]))
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
        # Every dropped candidate scores below the multiplier.
        for k in sol.inactive:
            if inp.rates[k] > 0 and inp.weights[k] > 0:
                assert np.log(inp.cnr[k] * inp.weights[k]) <= sol.log_multiplier + 1e-9


def test_asymptotic_split_examples():
    p = asymptotic_power(np.array([2.0, 2.0]), np.array([1.0, 1.0]), 9.0, [0, 1])
    assert p == pytest.approx([4.5, 4.5])
    p = asymptotic_power(np.array([2.0, 2.0]), np.array([1.0, 2.0]), 9.0, [0, 1])
    assert p == pytest.approx([6.0, 3.0])  # weaker channel gets more power
    with pytest.raises(ValueError):
        asymptotic_power(np.array([2.0]), np.array([1.0]), 9.0, [])


def test_kkt_approaches_asymptotic_split_at_large_budget():
    rng = np.random.default_rng(11)
    for _ in range(15):
        K = int(rng.integers(2, 6))
        inp = WaterfillInput(rng.uniform(0.2, 3.0, K), rng.uniform(0.2, 3.0, K),
                             rng.uniform(0.5, 8.0, K), 1e6)
        sol = kkt_power(inp)
        ref = asymptotic_power(inp.rates, inp.cnr, inp.p_tot, np.arange(K))
        assert sol.powers == pytest.approx(ref, rel=0.01)


def test_objective_nonincreasing_in_budget():
    rng = np.random.default_rng(13)
    inp0 = WaterfillInput(rng.uniform(0.2, 3.0, 4), rng.uniform(0.2, 3.0, 4),
                          rng.uniform(0.5, 8.0, 4), 1.0)
    prev = np.inf
    for p_tot in np.linspace(0.5, 80.0, 25):
        inp = inp0._replace(p_tot=float(p_tot))
        val = waterfill_objective(inp, kkt_power(inp).powers)
        assert val <= prev + 1e-12
        prev = val


def test_cnr_sensitivity_sign_flip():
    # With the multiplier frozen, dP/d(cnr) flips sign at cnr*w = e*lambda.
    log_lam = 0.3
    rate, weight = 2.0, 1.5
    crit = np.exp(log_lam + 1.0) / weight

    def closed_form(g):
        return (rate / g[0]) * (np.log(g[0] * weight) - log_lam)

    for cnr in (0.5 * crit, 0.9 * crit, 1.1 * crit, 2.0 * crit):
        analytic = power_cnr_sensitivity(rate, cnr, weight, log_lam)
        fd = central_difference(closed_form, np.array([cnr]), h=1e-6)[0]
        assert analytic == pytest.approx(fd, rel=1e-6)
        assert np.sign(analytic) == (1.0 if cnr < crit else -1.0)
    assert abs(power_cnr_sensitivity(rate, crit, weight, log_lam)) < 1e-12


def test_equal_sensors_power_ordering_regimes():
    # Equal rates and weights: above the critical score the better channel
    # gets less power, below it the better channel gets more.
    rng = np.random.default_rng(23)
    found_inverse = found_direct = 0
    for _ in range(400):
        rates = np.array([2.0, 2.0])
        weights = np.array([1.0, 1.0])
        cnr = rng.uniform(0.2, 4.0, size=2)
        if abs(cnr[0] - cnr[1]) < 1e-3:
            continue
        inp = WaterfillInput(weights, cnr, rates, float(rng.uniform(0.1, 30.0)))
        sol = kkt_power(inp)
        if np.any(sol.powers == 0):
            continue
        crit = np.exp(sol.log_multiplier + 1.0)
        hi, lo = np.argmax(cnr), np.argmin(cnr)
        if cnr[lo] * weights[lo] > crit:
            assert sol.powers[hi] < sol.powers[lo]
            found_inverse += 1
        elif cnr[hi] * weights[hi] < crit:
            assert sol.powers[hi] > sol.powers[lo]
            found_direct += 1
    assert found_inverse > 5
    assert found_direct > 5
