import numpy as np
import pytest

from wsnalloc.bounds import Allocation, level_error_bound
from wsnalloc.chansim import (SimConfig, bit_error_prob,
                              level_error_moment_check, simulate)
from wsnalloc.model import derive_stats, make_model, observation_variances

from conftest import paper_model
from oracles import enumerate_level_moment


def test_bit_error_prob_values():
    assert bit_error_prob(1.0, 0.0, 2.0) == pytest.approx(0.5)
    # gamma P / L = 0.5 gives the one-sigma Gaussian tail.
    assert bit_error_prob(1.0, 1.0, 2.0) == pytest.approx(0.158655, abs=1e-6)
    with pytest.raises(ValueError):
        bit_error_prob(1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        bit_error_prob(1.0, -1.0, 2.0)


def test_bit_error_prob_chernoff_ceiling():
    rng = np.random.default_rng(3)
    for _ in range(200):
        gamma = rng.uniform(0.05, 4.0)
        power = rng.uniform(0.0, 50.0)
        rate = float(rng.integers(1, 10))
        assert bit_error_prob(gamma, power, rate) \
            <= np.exp(-gamma * power / rate) + 1e-15


def test_simulate_requires_integer_rates(k3_model):
    alloc = Allocation(np.array([2.5, 1.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError, match="integer"):
        simulate(k3_model, alloc, SimConfig(trials=10))


def test_simulate_seed_determinism(k3_model):
    alloc = Allocation(np.array([3.0, 2.0, 1.0]),
                       np.array([500.0, 300.0, 200.0]))
    cfg = SimConfig(trials=20_000, seed=99)
    a = simulate(k3_model, alloc, cfg)
    b = simulate(k3_model, alloc, cfg)
    assert a.mse == b.mse
    assert a.half_width == b.half_width
    assert np.array_equal(a.level_err_moments, b.level_err_moments)
    c = simulate(k3_model, alloc, SimConfig(trials=20_000, seed=100))
    assert c.mse != a.mse


def test_simulate_worker_count_invariance(k3_model):
    alloc = Allocation(np.array([3.0, 2.0, 1.0]),
                       np.array([500.0, 300.0, 200.0]))
    base = simulate(k3_model, alloc, SimConfig(trials=30_000, seed=7, workers=1))
    multi = simulate(k3_model, alloc, SimConfig(trials=30_000, seed=7, workers=4))
    assert base.mse == multi.mse
    assert base.half_width == multi.half_width
    assert np.array_equal(base.level_err_moments, multi.level_err_moments)


def test_error_free_high_rate_mse_approaches_d1(k3_model):
    model = paper_model(p_tot=1e9, b_tot=30)
    stats = derive_stats(model)
    rates = np.array([10.0, 10.0, 10.0])
    powers = np.full(3, model.p_tot / 3.0)
    alloc = Allocation(rates, powers)
    from wsnalloc.bounds import d1
    report = simulate(model, alloc, SimConfig(trials=200_000, seed=11))
    assert bit_error_prob(0.5, powers[0], 10.0) == 0.0
    assert abs(report.mse - d1(stats, rates)) <= 3.0 * report.half_width
    assert report.mse >= stats.d0 - 3.0 * report.half_width


def test_zero_power_mse_stays_bounded(k3_model):
    alloc = Allocation(np.array([5.0, 5.0, 5.0]), np.zeros(3))
    report = simulate(k3_model, alloc, SimConfig(trials=30_000, seed=5))
    assert np.isfinite(report.mse)
    assert report.mse <= 4.0 * 3.0  # four times the prior trace


def test_bitflip_and_waveform_modes_agree(k3_model):
    alloc = Allocation(np.array([3.0, 2.0, 2.0]),
                       np.array([20.0, 12.0, 8.0]))
    a = simulate(k3_model, alloc, SimConfig(trials=150_000, seed=21,
                                            channel_mode="bitflip"))
    b = simulate(k3_model, alloc, SimConfig(trials=150_000, seed=22,
                                            channel_mode="waveform"))
    combined = np.hypot(a.half_width, b.half_width)
    assert abs(a.mse - b.mse) <= 3.0 * combined


def test_level_moment_zero_at_error_free_channel(k3_model):
    model = paper_model(p_tot=1e9, b_tot=30)
    alloc = Allocation(np.array([4.0, 4.0, 4.0]), np.full(3, model.p_tot / 3))
    checks = level_error_moment_check(model, alloc, SimConfig(trials=5_000, seed=2))
    for chk in checks:
        assert chk.empirical == 0.0
        assert chk.ok


def test_one_bit_moment_matches_exact_formula():
    model = make_model(prior_cov=[[1.0]], gains=[[1.0]], obs_noise_var=[1.0],
                       channel_gain=[1.0], channel_noise_var=[1.0],
                       p_tot=4.0, b_tot=1)
    alloc = Allocation(np.array([1.0]), np.array([4.0]))
    pe = float(bit_error_prob(0.5, 4.0, 1.0))
    exact = pe * (2.0 * model.tau[0]) ** 2  # one bit flip jumps 2 tau
    report = simulate(model, alloc, SimConfig(trials=400_000, seed=13))
    assert report.level_err_moments[0] == pytest.approx(
        exact, abs=3.0 * report.level_err_half_widths[0])
    stats = derive_stats(model)
    ceiling = level_error_bound(stats.tau, alloc.rates, stats.cnr, alloc.powers)
    assert exact <= ceiling[0]


def test_two_bit_moment_matches_enumeration_oracle(k3_model):
    rates = np.array([2.0, 2.0, 2.0])
    powers = np.array([400.0, 320.0, 280.0])
    alloc = Allocation(rates, powers)
    stats = derive_stats(k3_model)
    sigma_x = np.sqrt(observation_variances(k3_model.prior_cov, k3_model.gains,
                                            k3_model.obs_noise_var))
    report = simulate(k3_model, alloc, SimConfig(trials=400_000, seed=17))
    ceilings = level_error_bound(stats.tau, rates, stats.cnr, powers)
    for k in range(3):
        pe = float(bit_error_prob(stats.cnr[k], powers[k], rates[k]))
        exact = enumerate_level_moment(sigma_x[k], k3_model.tau[k], 2, pe)
        assert report.level_err_moments[k] == pytest.approx(
            exact, abs=3.0 * max(report.level_err_half_widths[k], 1e-12))
        assert exact <= ceilings[k] + 1e-12


def test_level_moment_check_passes_for_allocator_output(k3_model):
    model = paper_model(p_tot=10 ** (16 / 10), b_tot=6)
    from wsnalloc.allocators import AllocatorConfig, run_allocator
    run = run_allocator(model, AllocatorConfig(algorithm="a_coupled"))
    checks = level_error_moment_check(model, run.allocation,
                                      SimConfig(trials=60_000, seed=3))
    assert checks
    assert all(chk.ok for chk in checks)
