"""Noise-variance calibration for a target average receive SNR."""

from __future__ import annotations

import numpy as np


def calibrate_noise(H, target_snr_db: float, powers=None, N: int | None = None,
                    beta=None, averaging: str = "per_realization") -> float:
    """Noise variance giving ``sum_l tr(H_l diag(rho) H_l^H) / (sigma^2 N L K)`` = SNR.

    Args:
        H: stacked NL x K channel matrix.
        target_snr_db: desired SNR in dB.
        powers: per-UE transmit powers (default 1 W each).
        N: antennas per AP; only needed for ``averaging="ensemble"``.
        beta: L x K large-scale gains, used by ``averaging="ensemble"`` in
            place of the instantaneous channel energy.
        averaging: ``"per_realization"`` (instantaneous H) or ``"ensemble"``.

    Raises:
        ValueError: if the channel energy is zero.
    """
    H = np.asarray(H)
    NL, K = H.shape
    rho = np.ones(K) if powers is None else np.broadcast_to(np.asarray(powers, float), (K,))
    if averaging == "per_realization":
        energy = float(np.sum(np.abs(H) ** 2 * rho))
    elif averaging == "ensemble":
        if beta is None or N is None:
            raise ValueError("ensemble averaging needs beta and N")
        energy = float(N * np.sum(np.asarray(beta) * rho))
    else:
        raise ValueError(f"unknown averaging {averaging!r}")
    if not energy > 0:
        raise ValueError("zero channel energy: SNR is undefined")
    return energy / (10 ** (target_snr_db / 10) * NL * K)


def measured_snr_db(H, noise_var: float, powers=None) -> float:
    H = np.asarray(H)
    NL, K = H.shape
    rho = np.ones(K) if powers is None else np.broadcast_to(np.asarray(powers, float), (K,))
    return float(10 * np.log10(np.sum(np.abs(H) ** 2 * rho) / (noise_var * NL * K)))
