"""Network description and derived second-order statistics.

Everything here is fixed before any optimization runs: the Gaussian prior
on the unknown vector, per-sensor observation gains and noise levels, the
wireless channel gains, and the two resource budgets (total transmit power
and total number of quantization bits).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYM_TOL = 1e-12


@dataclass(frozen=True)
class NetworkModel:
    """Fixed parameters of a K-sensor estimation network.

    Attributes:
        q: dimension of the unknown vector.
        K: number of sensors.
        prior_cov: q x q covariance of the unknown vector (SPD).
        gains: q x K observation gain matrix; column k is sensor k's gain.
        obs_noise_var: length-K observation noise variances (> 0).
        channel_gain: length-K channel gain magnitudes |h_k|.
        channel_noise_var: length-K receiver noise variances (> 0).
        tau: length-K quantizer clipping thresholds (> 0).
        p_tot: total transmit power budget, linear watts.
        b_tot: total bit budget across sensors.
    """

    q: int
    K: int
    prior_cov: np.ndarray
    gains: np.ndarray
    obs_noise_var: np.ndarray
    channel_gain: np.ndarray
    channel_noise_var: np.ndarray
    tau: np.ndarray
    p_tot: float
    b_tot: int

    def __post_init__(self):
        object.__setattr__(self, "prior_cov", np.asarray(self.prior_cov, dtype=float))
        object.__setattr__(self, "gains", np.asarray(self.gains, dtype=float))
        for name in ("obs_noise_var", "channel_gain", "channel_noise_var", "tau"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        self._validate()

    def _validate(self):
        if self.q < 1 or self.K < 1:
            raise ValueError("q and K must be positive")
        if self.prior_cov.shape != (self.q, self.q):
            raise ValueError(f"prior_cov must be {self.q}x{self.q}")
        asym = np.max(np.abs(self.prior_cov - self.prior_cov.T))
        scale = max(np.max(np.abs(self.prior_cov)), 1.0)
        if asym > SYM_TOL * scale:
            raise ValueError("prior_cov must be symmetric")
        if np.min(np.linalg.eigvalsh(self.prior_cov)) <= 0:
            raise ValueError("prior_cov must be positive definite")
        if self.gains.shape != (self.q, self.K):
            raise ValueError(f"gains must be {self.q}x{self.K} (one column per sensor)")
        for name in ("obs_noise_var", "channel_gain", "channel_noise_var", "tau"):
            vec = getattr(self, name)
            if vec.shape != (self.K,):
                raise ValueError(f"{name} must have length {self.K}")
        if np.any(self.obs_noise_var <= 0):
            raise ValueError("obs_noise_var entries must be > 0")
        if np.any(self.channel_gain == 0):
            raise ValueError("channel_gain entries must be nonzero")
        if np.any(self.channel_noise_var <= 0):
            raise ValueError("channel_noise_var entries must be > 0")
        if np.any(self.tau <= 0):
            raise ValueError("tau entries must be > 0")
        if not self.p_tot > 0:
            raise ValueError("p_tot must be > 0")
        if self.b_tot < 1:
            raise ValueError("b_tot must be >= 1")


@dataclass(frozen=True)
class DerivedStats:
    """Second-order statistics derived from a :class:`NetworkModel`.

    ``cxx`` is the observation covariance, ``cxtheta`` the K x q
    cross-covariance between observations and unknowns.  ``d0`` is the
    clairvoyant floor: the MSE of centralized estimation from unquantized,
    error-free observations.  ``tau``, ``cnr`` and ``trace_prior`` are
    carried along so bound evaluation never needs the model again.
    """

    cxx: np.ndarray
    cxtheta: np.ndarray
    cnr: np.ndarray
    lambda_min_cxx: float
    lambda_max_cross: float
    delta_weights: np.ndarray
    d0: float
    tau: np.ndarray
    trace_prior: float
    K: int
    q: int


def observation_variances(prior_cov: np.ndarray, gains: np.ndarray,
                          obs_noise_var: np.ndarray) -> np.ndarray:
    """Per-sensor variance of the analog observation, a_k' C a_k + sigma_n^2."""
    prior_cov = np.asarray(prior_cov, dtype=float)
    gains = np.asarray(gains, dtype=float)
    return np.einsum("qk,qp,pk->k", gains, prior_cov, gains) + np.asarray(obs_noise_var, dtype=float)


def default_tau(prior_cov: np.ndarray, gains: np.ndarray,
                obs_noise_var: np.ndarray) -> np.ndarray:
    """Default clipping thresholds: four standard deviations of each observation.

    With Gaussian observations this puts the clipping probability near
    6e-5 per sensor, small enough that clipping is negligible while the
    quantization step stays proportional to the observation's spread.
    """
    return 4.0 * np.sqrt(observation_variances(prior_cov, gains, obs_noise_var))


def derive_stats(model: NetworkModel) -> DerivedStats:
    """Compute all derived statistics needed by the bounds and allocators.

    Eigenvalues come from a symmetric eigensolver and the clairvoyant floor
    from a Cholesky solve; the observation covariance is never inverted
    explicitly.
    """
    A = model.gains
    cxtheta = A.T @ model.prior_cov                       # K x q
    cxx = cxtheta @ A + np.diag(model.obs_noise_var)      # A' C A + C_n
    cxx = 0.5 * (cxx + cxx.T)

    eig_cxx = np.linalg.eigvalsh(cxx)
    if eig_cxx[0] <= 0:
        raise ValueError("degenerate observation covariance")

    cross = cxtheta @ cxtheta.T
    lambda_max_cross = float(np.linalg.eigvalsh(cross)[-1])
    delta_weights = np.sum(cxtheta**2, axis=1)

    cnr = model.channel_gain**2 / (2.0 * model.channel_noise_var)

    try:
        chol = np.linalg.cholesky(cxx)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate observation covariance") from exc
    half = np.linalg.solve(chol, cxtheta)                 # chol^-1 C_xtheta
    trace_prior = float(np.trace(model.prior_cov))
    d0 = trace_prior - float(np.sum(half**2))

    return DerivedStats(
        cxx=cxx,
        cxtheta=cxtheta,
        cnr=cnr,
        lambda_min_cxx=float(eig_cxx[0]),
        lambda_max_cross=lambda_max_cross,
        delta_weights=delta_weights,
        d0=d0,
        tau=model.tau.copy(),
        trace_prior=trace_prior,
        K=model.K,
        q=model.q,
    )


def make_model(prior_cov, gains, obs_noise_var, channel_gain, channel_noise_var,
               p_tot: float, b_tot: int, tau=None) -> NetworkModel:
    """Build a :class:`NetworkModel`, applying the default tau rule when absent."""
    prior_cov = np.asarray(prior_cov, dtype=float)
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 2:
        raise ValueError("gains must be a q x K matrix")
    q, K = gains.shape
    if tau is None:
        tau = default_tau(prior_cov, gains, obs_noise_var)
    return NetworkModel(
        q=q, K=K,
        prior_cov=prior_cov,
        gains=gains,
        obs_noise_var=np.asarray(obs_noise_var, dtype=float),
        channel_gain=np.asarray(channel_gain, dtype=float),
        channel_noise_var=np.asarray(channel_noise_var, dtype=float),
        tau=np.asarray(tau, dtype=float),
        p_tot=float(p_tot),
        b_tot=int(b_tot),
    )
