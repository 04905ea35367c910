"""Monte Carlo end-to-end simulation of the estimation pipeline.

Each trial draws the unknown vector and observation noises, quantizes every
transmitting sensor's observation, sends the bits over independent binary
channels, reconstructs levels at the fusion center and applies the linear
fusion matrix.  Two channel models are available:

* ``bitflip``: each bit flips independently with the coherent-BPSK error
  probability; cheap and exactly the channel's error statistics.
* ``waveform``: antipodal symbols plus per-symbol Gaussian noise with hard
  detection; statistically identical, kept to validate the equivalence.

Trials are processed in fixed-size blocks, each with its own RNG stream
spawned from the seed, and block results are reduced in index order, so a
report depends only on (model, allocation, trials, seed, mode) and never on
how many workers executed the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .bounds import Allocation, fusion_matrix, level_error_bound
from .model import NetworkModel, derive_stats
from .quantizer import QuantizerSpec, quantize_array

TRIAL_BLOCK = 8192
CHANNEL_MODES = ("bitflip", "waveform")


@dataclass(frozen=True)
class SimConfig:
    trials: int = 100_000
    seed: int = 0
    channel_mode: str = "bitflip"
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.channel_mode not in CHANNEL_MODES:
            raise ValueError(f"channel_mode must be one of {CHANNEL_MODES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SimReport:
    """Empirical MSE with a 95% confidence half-width, plus per-sensor
    second moments of the level reconstruction error."""

    mse: float
    half_width: float
    level_err_moments: np.ndarray
    level_err_half_widths: np.ndarray
    trials: int
    seed: int


def bit_error_prob(gamma, power, rate):
    """Per-bit error probability Q(sqrt(2 * gamma * P / L)) of coherent BPSK
    with the sensor's power split evenly over its L bits."""
    gamma = np.asarray(gamma, dtype=float)
    power = np.asarray(power, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 1):
        raise ValueError("rate must be at least one bit")
    if np.any(power < 0):
        raise ValueError("power must be nonnegative")
    x = np.sqrt(2.0 * gamma * power / rate)
    return 0.5 * erfc(x / np.sqrt(2.0))


class _Pipeline:
    """Precomputed per-sensor tables shared by every simulation block."""

    def __init__(self, model: NetworkModel, alloc: Allocation):
        rates = np.asarray(alloc.rates, dtype=float)
        if np.any(rates != np.round(rates)):
            raise ValueError("simulation requires integer rates")
        self.model = model
        stats = derive_stats(model)
        self.fusion = fusion_matrix(stats, rates)
        self.chol_prior = np.linalg.cholesky(model.prior_cov)
        self.obs_std = np.sqrt(model.obs_noise_var)
        self.active = np.flatnonzero(rates >= 1)
        self.rates = rates.astype(int)
        self.spec = {}
        self.levels = {}
        self.shifts = {}
        self.pe = {}
        self.amplitude = {}
        for k in self.active:
            L = int(self.rates[k])
            self.spec[k] = QuantizerSpec(rate_bits=L, tau=float(model.tau[k]))
            self.levels[k] = self.spec[k].levels()
            self.shifts[k] = np.arange(L - 1, -1, -1)
            gamma = model.channel_gain[k] ** 2 / (2.0 * model.channel_noise_var[k])
            self.pe[k] = float(bit_error_prob(gamma, alloc.powers[k], L))
            self.amplitude[k] = model.channel_gain[k] * np.sqrt(alloc.powers[k] / L)
        self.noise_std = np.sqrt(model.channel_noise_var)

    def run_block(self, rng: np.random.Generator, n: int, mode: str):
        model = self.model
        theta = self.chol_prior @ rng.standard_normal((model.q, n))
        noise = self.obs_std[:, None] * rng.standard_normal((model.K, n))
        x = model.gains.T @ theta + noise

        m_sent = np.zeros((model.K, n))
        m_hat = np.zeros((model.K, n))
        for k in self.active:
            L = int(self.rates[k])
            idx = quantize_array(x[k], self.spec[k]) - 1
            m_sent[k] = self.levels[k][idx]
            bits = (idx[None, :] >> self.shifts[k][:, None]) & 1
            if mode == "bitflip":
                flips = rng.random((L, n)) < self.pe[k]
                rbits = bits ^ flips
            else:
                symbols = 1 - 2 * bits
                y = self.amplitude[k] * symbols \
                    + self.noise_std[k] * rng.standard_normal((L, n))
                rbits = (y < 0).astype(np.int64)
            ridx = np.sum(rbits << self.shifts[k][:, None], axis=0)
            m_hat[k] = self.levels[k][ridx]

        err = np.sum((self.fusion @ m_hat - theta) ** 2, axis=0)
        lvl = (m_hat - m_sent) ** 2
        return (float(np.sum(err)), float(np.sum(err**2)),
                np.sum(lvl, axis=1), np.sum(lvl**2, axis=1))


def simulate(model: NetworkModel, alloc: Allocation,
             simcfg: SimConfig | None = None) -> SimReport:
    """Estimate the realized MSE of an integer-rate allocation."""
    simcfg = simcfg or SimConfig()
    pipeline = _Pipeline(model, alloc)
    trials = int(simcfg.trials)
    n_blocks = (trials + TRIAL_BLOCK - 1) // TRIAL_BLOCK
    sizes = [min(TRIAL_BLOCK, trials - i * TRIAL_BLOCK) for i in range(n_blocks)]
    streams = np.random.SeedSequence(simcfg.seed).spawn(n_blocks)

    def job(i: int):
        rng = np.random.default_rng(streams[i])
        return pipeline.run_block(rng, sizes[i], simcfg.channel_mode)

    if simcfg.workers > 1:
        with ThreadPoolExecutor(max_workers=simcfg.workers) as pool:
            results = list(pool.map(job, range(n_blocks)))
    else:
        results = [job(i) for i in range(n_blocks)]

    sum_e = 0.0
    sum_e2 = 0.0
    sum_lvl = np.zeros(model.K)
    sum_lvl2 = np.zeros(model.K)
    for e, e2, lv, lv2 in results:      # fixed order: reduce by block index
        sum_e += e
        sum_e2 += e2
        sum_lvl += lv
        sum_lvl2 += lv2

    mse = sum_e / trials
    if trials > 1:
        var = max(sum_e2 - sum_e**2 / trials, 0.0) / (trials - 1)
        lvl_var = np.maximum(sum_lvl2 - sum_lvl**2 / trials, 0.0) / (trials - 1)
    else:
        var = 0.0
        lvl_var = np.zeros(model.K)
    return SimReport(
        mse=mse,
        half_width=1.96 * np.sqrt(var / trials),
        level_err_moments=sum_lvl / trials,
        level_err_half_widths=1.96 * np.sqrt(lvl_var / trials),
        trials=trials,
        seed=simcfg.seed,
    )


@dataclass(frozen=True)
class MomentCheck:
    sensor: int
    empirical: float
    half_width: float
    ceiling: float
    ok: bool


def level_error_moment_check(model: NetworkModel, alloc: Allocation,
                             simcfg: SimConfig | None = None) -> list[MomentCheck]:
    """Verify the per-sensor level-error moment against its analytic ceiling.

    The ceiling (4 tau^2 L / 3) exp(-cnr P / L) assumes the per-bit error
    rate is within exp(-cnr P / L); empirical moments must stay below it up
    to three Monte Carlo half-widths.
    """
    report = simulate(model, alloc, simcfg)
    stats = derive_stats(model)
    ceilings = level_error_bound(stats.tau, alloc.rates, stats.cnr, alloc.powers)
    out = []
    for k in np.flatnonzero(np.asarray(alloc.rates) >= 1):
        emp = float(report.level_err_moments[k])
        hw = float(report.level_err_half_widths[k])
        out.append(MomentCheck(sensor=int(k), empirical=emp, half_width=hw,
                               ceiling=float(ceilings[k]),
                               ok=emp <= ceilings[k] + 3.0 * hw))
    return out
