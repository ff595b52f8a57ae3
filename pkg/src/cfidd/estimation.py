"""Pilot design, LS channel estimation and out-of-cluster interference estimation.

The interference seen during the pilot phase is only observable in the
orthogonal complement of the pilot subspace.  After removing the serving-UE
contribution, the residual is despread onto an orthonormal basis ``Psi`` of
that complement and a truncated SVD gives a low-rank factorisation
``G_hat @ S_bar_hat^H`` of the interference.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EstimationInfeasibleError

NMSE_FLOOR_DB = -200.0


@dataclass(frozen=True)
class PilotBook:
    Phi: np.ndarray
    Psi: np.ndarray
    tau_p: int
    p: float = 1.0

    @property
    def K(self) -> int:
        return self.Phi.shape[1]

    @property
    def projector(self) -> np.ndarray:
        """``I - Phi Phi^H``."""
        return np.eye(self.tau_p) - self.Phi @ self.Phi.conj().T

    @property
    def gain(self) -> float:
        return float(np.sqrt(self.p * self.tau_p))


@dataclass(frozen=True)
class EstimationResult:
    H_hat: np.ndarray
    G_hat: np.ndarray
    S_bar_hat: np.ndarray
    est_rank: int
    nmse_channel: float = float("nan")
    nmse_interference: float = float("nan")


def make_pilots(tau_p: int, K: int, p: float = 1.0) -> PilotBook:
    """Orthonormal pilots from the columns of the unitary DFT matrix.

    ``Phi`` takes the first ``K`` columns, ``Psi`` the remaining ones.
    """
    if tau_p < K:
        raise ConfigurationError(f"tau_p={tau_p} is shorter than K={K}")
    idx = np.arange(tau_p)
    F = np.exp(-2j * np.pi * np.outer(idx, idx) / tau_p) / np.sqrt(tau_p)
    return PilotBook(Phi=F[:, :K], Psi=F[:, K:], tau_p=tau_p, p=p)


def qpsk_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-power QPSK symbols (used for the OCL pilot-phase transmissions)."""
    re = rng.integers(0, 2, size=shape) * 2 - 1
    im = rng.integers(0, 2, size=shape) * 2 - 1
    return (re + 1j * im) / np.sqrt(2)


def complex_noise(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def received_pilot_block(H, G, pilots: PilotBook, S, noise_var: float, seed=None) -> np.ndarray:
    """Stacked pilot-phase observation ``sqrt(p tau_p) H Phi^H + G S^H + N``."""
    H = np.asarray(H)
    G = np.asarray(G)
    S = np.asarray(S)
    if H.shape[1] != pilots.K:
        raise ConfigurationError("H column count must equal the number of pilots K")
    if G.shape[0] != H.shape[0]:
        raise ConfigurationError("H and G must have the same row count")
    if S.shape != (pilots.tau_p, G.shape[1]):
        raise ConfigurationError(f"S must be {pilots.tau_p} x {G.shape[1]}, got {S.shape}")
    Y = pilots.gain * H @ pilots.Phi.conj().T + G @ S.conj().T
    if noise_var > 0:
        rng = np.random.default_rng(seed)
        Y = Y + complex_noise(rng, Y.shape, noise_var)
    return Y


def ls_channel_estimate(Y, pilots: PilotBook) -> np.ndarray:
    return Y @ pilots.Phi / pilots.gain


def residual_signal(Y, pilots: PilotBook, H_hat) -> np.ndarray:
    return Y - pilots.gain * H_hat @ pilots.Phi.conj().T


def default_rank(M: int, tau_p: int, K: int) -> int:
    return max(1, min(M, tau_p - K))


def estimate_ocl(Z, pilots: PilotBook, rank: int, split: str = "symmetric"):
    """Rank-``rank`` least-squares factorisation of the despread residual.

    Args:
        Z: NL x tau_p residual (or any signal already confined to the
            orthogonal complement of the pilots).
        pilots: pilot book used in the block.
        rank: number of singular components kept.
        split: how the singular values are shared between the factors.
            ``"symmetric"`` puts ``sqrt(sigma)`` on each side.
            ``"unit_power"`` normalises the columns of ``S_bar_hat`` to the norm
            of a unit-power symbol sequence, ``sqrt(tau_p - K)``, so that
            ``G_hat`` carries the interference channel at data-phase scale.
            The product ``G_hat @ S_bar_hat^H`` is the same either way.

    Returns:
        ``(G_hat, S_bar_hat)`` of shapes NL x rank and (tau_p - K) x rank.
    """
    n_comp = pilots.Psi.shape[1]
    if n_comp == 0:
        raise EstimationInfeasibleError("tau_p == K leaves no orthogonal complement")
    Zt = Z @ pilots.Psi
    max_rank = min(Zt.shape[0], n_comp)
    if not 1 <= rank <= max_rank:
        raise ConfigurationError(f"rank must lie in [1, {max_rank}], got {rank}")
    U, sv, Vh = np.linalg.svd(Zt, full_matrices=False)
    U, sv, V = U[:, :rank], sv[:rank], Vh[:rank].conj().T
    if split == "symmetric":
        root = np.sqrt(sv)
        return U * root, V * root
    if split == "unit_power":
        scale = np.sqrt(n_comp)
        return U * (sv / scale), V * scale
    raise ConfigurationError(f"unknown split {split!r}")


def nmse(estimate, truth) -> float:
    """Normalised squared Frobenius error in dB (floored at -200 dB)."""
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ConfigurationError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    ref = np.sum(np.abs(truth) ** 2)
    if ref == 0:
        raise ValueError("truth has zero norm")
    err = np.sum(np.abs(estimate - truth) ** 2) / ref
    if err <= 10 ** (NMSE_FLOOR_DB / 10):
        return NMSE_FLOOR_DB
    return float(10 * np.log10(err))


def interference_truth(G, S, pilots: PilotBook) -> np.ndarray:
    """``G (Psi^H S)^H``, the interference component that can be observed."""
    S_bar = pilots.Psi.conj().T @ S
    return G @ S_bar.conj().T


def estimate_block(Y, pilots: PilotBook, M: int, rank: int | None = None,
                   stage: str = "post", split: str = "symmetric",
                   H=None, G=None, S=None) -> EstimationResult:
    """Channel and interference estimation for one pilot block.

    ``stage="post"`` estimates the interference from the residual left after
    LS channel estimation; ``stage="pre"`` projects the raw block with the
    known pilot projector instead.  Passing the true ``H``, ``G`` and ``S``
    fills in the NMSE diagnostics.
    """
    K = pilots.K
    H_hat = ls_channel_estimate(Y, pilots)
    n_comp = pilots.tau_p - K
    if M == 0 or n_comp == 0:
        G_hat = np.zeros((Y.shape[0], 0), dtype=complex)
        S_bar_hat = np.zeros((n_comp, 0), dtype=complex)
        est_rank = 0
    else:
        if pilots.tau_p <= K + M:
            warnings.warn(f"tau_p={pilots.tau_p} <= K+M={K + M}: interference is under-sampled",
                          stacklevel=2)
        if stage == "post":
            Z = residual_signal(Y, pilots, H_hat)
        elif stage == "pre":
            Z = Y @ pilots.projector
        else:
            raise ConfigurationError(f"unknown stage {stage!r}")
        est_rank = default_rank(M, pilots.tau_p, K) if rank is None else rank
        est_rank = min(est_rank, Y.shape[0], n_comp)
        G_hat, S_bar_hat = estimate_ocl(Z, pilots, est_rank, split=split)

    nmse_ch = nmse(H_hat, H) if H is not None else float("nan")
    nmse_int = float("nan")
    if G is not None and S is not None and est_rank > 0:
        nmse_int = nmse(G_hat @ S_bar_hat.conj().T, interference_truth(G, S, pilots))
    return EstimationResult(H_hat, G_hat, S_bar_hat, est_rank, nmse_ch, nmse_int)
