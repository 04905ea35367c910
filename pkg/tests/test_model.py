import numpy as np
import pytest

from wsnalloc.model import default_tau, derive_stats, make_model

from conftest import paper_model
from oracles import random_model_params

# Pinned with an explicit-inversion script on the K=3 reference config.
GOLDEN_D0_K3 = 0.9805950340799883


def scalar_model(**kw):
    args = dict(prior_cov=[[1.0]], gains=[[1.0]], obs_noise_var=[1.0],
                channel_gain=[1.0], channel_noise_var=[1.0],
                p_tot=10.0, b_tot=8)
    args.update(kw)
    return make_model(**args)


def test_scalar_identity():
    stats = derive_stats(scalar_model())
    assert stats.cxx == pytest.approx(np.array([[2.0]]))
    assert stats.cxtheta == pytest.approx(np.array([[1.0]]))
    assert stats.d0 == pytest.approx(0.5)


def test_zero_gains_give_prior_trace():
    model = make_model(prior_cov=[[1.0, 0.0], [0.0, 2.0]],
                       gains=np.zeros((2, 3)),
                       obs_noise_var=[1.0, 1.0, 1.0],
                       channel_gain=[1.0, 1.0, 1.0],
                       channel_noise_var=[1.0, 1.0, 1.0],
                       p_tot=10.0, b_tot=9)
    stats = derive_stats(model)
    assert np.all(stats.cxtheta == 0.0)
    assert stats.d0 == pytest.approx(3.0)


def test_paper_config_d0_matches_golden():
    stats = derive_stats(paper_model())
    assert stats.d0 == pytest.approx(GOLDEN_D0_K3, rel=1e-12)
    assert stats.trace_prior == pytest.approx(3.0)


def test_default_tau_scalar_case():
    tau = default_tau(np.array([[1.0]]), np.array([[1.0]]), np.array([1.0]))
    assert tau[0] == pytest.approx(4.0 * np.sqrt(2.0))


def test_default_tau_pure_noise():
    tau = default_tau(np.array([[1.0]]), np.array([[0.0]]), np.array([1.0]))
    assert tau[0] == pytest.approx(4.0)


def test_default_tau_paper_sensor_one():
    model = paper_model()
    assert model.tau[0] == pytest.approx(4.0 * np.sqrt(4.0 + np.sqrt(2.0)))


def test_cnr_definition():
    model = paper_model()
    stats = derive_stats(model)
    assert stats.cnr == pytest.approx(np.full(3, 0.5))


def test_cxx_minus_noise_is_psd():
    rng = np.random.default_rng(7)
    for _ in range(20):
        params = random_model_params(rng)
        model = make_model(p_tot=10.0, b_tot=12, **params)
        stats = derive_stats(model)
        gram = stats.cxx - np.diag(model.obs_noise_var)
        assert np.min(np.linalg.eigvalsh(gram)) >= -1e-10
        assert 0.0 <= stats.d0 <= stats.trace_prior + 1e-12
        assert np.all(stats.cnr > 0)


def test_d0_weakly_decreases_with_less_obs_noise():
    rng = np.random.default_rng(11)
    for _ in range(20):
        params = random_model_params(rng, K=3, q=2)
        model = make_model(p_tot=10.0, b_tot=12, **params)
        d0_base = derive_stats(model).d0
        better = dict(params)
        better["obs_noise_var"] = params["obs_noise_var"] * rng.uniform(0.2, 0.9)
        d0_better = derive_stats(make_model(p_tot=10.0, b_tot=12, **better)).d0
        assert d0_better <= d0_base + 1e-12


def test_derive_stats_deterministic():
    model = paper_model()
    a = derive_stats(model)
    b = derive_stats(model)
    assert np.array_equal(a.cxx, b.cxx)
    assert np.array_equal(a.cxtheta, b.cxtheta)
    assert a.d0 == b.d0
    assert a.lambda_min_cxx == b.lambda_min_cxx


def test_validation_rejects_bad_inputs():
    with pytest.raises(ValueError):
        scalar_model(obs_noise_var=[-1.0])
    with pytest.raises(ValueError):
        scalar_model(prior_cov=[[0.0]])
    with pytest.raises(ValueError):
        make_model(prior_cov=[[1.0, 0.5], [0.4, 1.0]], gains=[[1.0], [1.0]],
                   obs_noise_var=[1.0], channel_gain=[1.0],
                   channel_noise_var=[1.0], p_tot=1.0, b_tot=1)
    with pytest.raises(ValueError):
        scalar_model(tau=[0.0])
    with pytest.raises(ValueError):
        scalar_model(channel_gain=[0.0])
