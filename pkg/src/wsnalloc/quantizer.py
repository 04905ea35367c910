"""Uniform multi-bit quantizer with natural-binary bit mapping.

A rate-L quantizer has M = 2^L levels, step Delta = 2*tau/(M-1), and level
values (2i - 1 - M) * Delta / 2 for i = 1..M, so the extreme levels sit at
-tau and +tau.  Observations beyond the clipping threshold map to the
extreme levels.  The same step size drives the quantization-noise variance
model used everywhere in the bounds: tau^2 / (3 (2^L - 1)^2), which equals
Delta^2 / 12 exactly at integer rates and extends smoothly to real-valued
rates for bound evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuantizerSpec:
    """Rate and clipping threshold of one sensor's quantizer."""

    rate_bits: int
    tau: float

    def __post_init__(self):
        if int(self.rate_bits) != self.rate_bits or self.rate_bits < 1:
            raise ValueError("rate_bits must be a positive integer")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    @property
    def n_levels(self) -> int:
        return 1 << int(self.rate_bits)

    @property
    def step(self) -> float:
        return 2.0 * self.tau / (self.n_levels - 1)

    def levels(self) -> np.ndarray:
        """All M level values, ascending; endpoints are -tau and +tau."""
        m = self.n_levels
        i = np.arange(1, m + 1)
        return (2 * i - 1 - m) * self.step / 2.0


def quantize(x: float, spec: QuantizerSpec) -> int:
    """Map an observation to its level index in 1..M.

    Interior points use half-open cells [m_i - Delta/2, m_i + Delta/2),
    closed on the left; values at or beyond +-tau clip to the extreme
    indices.
    """
    if not np.isfinite(x):
        raise ValueError("cannot quantize a non-finite value")
    return int(quantize_array(np.asarray([x]), spec)[0])


def quantize_array(x: np.ndarray, spec: QuantizerSpec) -> np.ndarray:
    """Vectorized :func:`quantize`; returns int indices in 1..M."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot quantize a non-finite value")
    m = spec.n_levels
    # Cell i covers [ (i-1-M/2)*Delta, (i-M/2)*Delta ); floor picks it out.
    idx = np.floor(x / spec.step + m / 2.0).astype(np.int64) + 1
    np.clip(idx, 1, m, out=idx)
    idx[x >= spec.tau] = m
    idx[x <= -spec.tau] = 1
    return idx


def encode_bits(index: int, rate_bits: int) -> np.ndarray:
    """Natural binary encoding of (index - 1), most significant bit first."""
    m = 1 << rate_bits
    if not 1 <= index <= m:
        raise ValueError(f"index {index} out of range 1..{m}")
    value = index - 1
    shifts = np.arange(rate_bits - 1, -1, -1)
    return (value >> shifts) & 1


def decode_bits(bits: np.ndarray) -> int:
    """Inverse of :func:`encode_bits`: bits (MSB first) back to an index."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or bits.size < 1 or np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be a 1-D 0/1 vector")
    shifts = np.arange(bits.size - 1, -1, -1)
    return int(np.sum(bits << shifts)) + 1


def level_from_bits(bits: np.ndarray, spec: QuantizerSpec) -> float:
    """Reconstruct the level value directly from its bit pattern.

    Uses the positional-weight form Delta * (0.5 - 2^(L-1) + sum_j b_j 2^(L-j)),
    which agrees with the level table of :class:`QuantizerSpec` for the
    natural-binary mapping.
    """
    bits = np.asarray(bits, dtype=np.int64)
    L = int(spec.rate_bits)
    if bits.size != L:
        raise ValueError("bit pattern length must equal the quantizer rate")
    weights = 1 << np.arange(L - 1, -1, -1)
    return spec.step * (0.5 - (1 << (L - 1)) + float(np.sum(bits * weights)))


def _pow2_minus_one(rate_bits: np.ndarray) -> np.ndarray:
    """2^L - 1, exact at integer rates, cancellation-free for tiny ones."""
    out = np.exp2(rate_bits) - 1.0
    small = rate_bits < 0.5
    if np.any(small):
        out = np.where(small, np.expm1(rate_bits * np.log(2.0)), out)
    return out


def quant_noise_var(rate_bits, tau):
    """Quantization-noise variance tau^2 / (3 (2^L - 1)^2).

    Accepts real-valued rates (used throughout the bound formulas); at
    integer rates this is exactly Delta^2 / 12.  Elementwise over arrays.
    """
    rate_bits = np.asarray(rate_bits, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(rate_bits <= 0):
        raise ValueError("rate must be > 0")
    return tau**2 / (3.0 * _pow2_minus_one(rate_bits) ** 2)


def quant_noise_var_deriv(rate_bits, tau):
    """d/dL of :func:`quant_noise_var`: -2 ln2 tau^2 2^L / (3 (2^L - 1)^3)."""
    rate_bits = np.asarray(rate_bits, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(rate_bits <= 0):
        raise ValueError("rate must be > 0")
    p1 = _pow2_minus_one(rate_bits)
    return -2.0 * np.log(2.0) * tau**2 * (p1 + 1.0) / (3.0 * p1**3)
