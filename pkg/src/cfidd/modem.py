"""Gray-labelled QPSK / 16-QAM, soft-symbol statistics and extrinsic demapping.

Bits map to antipodal signs as ``s = 2b - 1``: bit 1 is the +1 amplitude,
and every LLR here is ``log P(b=1) / P(b=0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .ldpc import LLR_CLIP


@dataclass(frozen=True)
class Constellation:
    """Points indexed by integer label; ``bits[i]`` is the label of ``points[i]``."""

    name: str
    points: np.ndarray
    bits: np.ndarray  # (2**Mc, Mc) in {0, 1}

    @property
    def bits_per_symbol(self) -> int:
        return self.bits.shape[1]

    @property
    def signs(self) -> np.ndarray:
        return 2.0 * self.bits - 1.0

    def map(self, bits) -> np.ndarray:
        """Map bits (..., Mc*S) to S symbols each."""
        b = np.asarray(bits).reshape(*np.shape(bits)[:-1], -1, self.bits_per_symbol)
        weights = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return self.points[b @ weights]


def _labels(Mc: int) -> np.ndarray:
    idx = np.arange(2 ** Mc)
    return ((idx[:, None] >> np.arange(Mc - 1, -1, -1)) & 1).astype(np.int8)


def qpsk() -> Constellation:
    bits = _labels(2)
    s = 2.0 * bits - 1.0
    return Constellation("qpsk", (s[:, 0] + 1j * s[:, 1]) / np.sqrt(2), bits)


def qam16() -> Constellation:
    # bits (b0, b1) -> I axis, (b2, b3) -> Q axis; per axis b_sign picks the
    # half-plane and b_mag the ring, giving -3, -1, 1, 3 <-> 00, 01, 11, 10
    bits = _labels(4)
    s = 2.0 * bits - 1.0
    i_amp = s[:, 0] * (2 - s[:, 1])
    q_amp = s[:, 2] * (2 - s[:, 3])
    return Constellation("qam16", (i_amp + 1j * q_amp) / np.sqrt(10), bits)


def get_constellation(name: str) -> Constellation:
    table = {"qpsk": qpsk, "qam16": qam16}
    if name not in table:
        raise ValueError(f"unknown modulation {name!r}")
    return table[name]()


def symbol_priors(llrs, const: Constellation) -> np.ndarray:
    """Product-form symbol probabilities from per-bit LLRs.

    ``llrs`` has shape (..., Mc); the result has shape (..., 2**Mc).
    """
    llrs = np.asarray(llrs, dtype=float)
    # P(bit) = 1 / (1 + exp(-sign * llr)); work in logs to stay finite
    log_p = -np.logaddexp(0.0, -llrs[..., None, :] * const.signs)
    logp_sym = log_p.sum(axis=-1)
    logp_sym -= logsumexp(logp_sym, axis=-1, keepdims=True)
    return np.exp(logp_sym)


def soft_stats(llrs, const: Constellation):
    """Mean and variance of the symbol under the a-priori distribution.

    ``llrs`` has shape (..., Mc); returns ``(means, variances)`` of shape (...).
    """
    P = symbol_priors(llrs, const)
    means = P @ const.points
    # E|s - mean|^2 summed directly; the E|s|^2 - |mean|^2 shortcut cancels badly
    var = np.sum(P * np.abs(const.points - means[..., None]) ** 2, axis=-1)
    return means, var


def extrinsic_llrs(r_tilde, mu, sigma_z2, priors, const: Constellation,
                   clip: float = LLR_CLIP) -> np.ndarray:
    """Extrinsic bit LLRs of a Gaussian-approximated detector output.

    Args:
        r_tilde, mu, sigma_z2: detector output ``r_tilde = mu * r + z`` with
            ``z ~ CN(0, sigma_z2)``; arrays broadcastable to shape (...).
        priors: a-priori LLRs of shape (..., Mc).

    Returns:
        Array (..., Mc): log-ratio of the bit-conditioned likelihood sums,
        with the a-priori LLR of the same bit removed.
    """
    sigma_z2 = np.asarray(sigma_z2, dtype=float)
    if np.any(~(sigma_z2 > 0)):
        raise FloatingPointError("sigma_z2 must be strictly positive")
    r_tilde = np.asarray(r_tilde)[..., None]
    mu = np.asarray(mu)[..., None]
    priors = np.clip(np.asarray(priors, dtype=float), -clip, clip)

    log_lik = -np.abs(r_tilde - mu * const.points) ** 2 / sigma_z2[..., None]
    log_prior = -np.logaddexp(0.0, -priors[..., None, :] * const.signs).sum(axis=-1)
    metric = log_lik + log_prior  # (..., 2**Mc)

    Mc = const.bits_per_symbol
    out = np.empty(metric.shape[:-1] + (Mc,))
    for b in range(Mc):
        one = const.bits[:, b] == 1
        out[..., b] = (logsumexp(metric[..., one], axis=-1)
                       - logsumexp(metric[..., ~one], axis=-1))
    return np.clip(out - priors, -clip, clip)


def hard_bits(symbols, const: Constellation) -> np.ndarray:
    """Minimum-distance decisions, returned as bits (..., S*Mc)."""
    symbols = np.asarray(symbols)
    idx = np.argmin(np.abs(symbols[..., None] - const.points) ** 2, axis=-1)
    bits = const.bits[idx]
    return bits.reshape(*symbols.shape[:-1], -1)
