"""Soft MMSE detection with parallel interference cancellation.

Streams are the columns of ``A = [H_hat, G_hat]``: the first ``K`` are the
served UEs, the rest are estimated out-of-cluster (OCL) interference
directions.  Soft state is per stream and per symbol: the mean ``r_bar`` and
the residual energy ``E|r - r_bar|^2`` of every transmitted symbol.

Two implementations are provided.  :func:`mmse_filter` and
:func:`modified_pic_detect` work on one stream in the NL-dimensional antenna
domain and follow the filter equations literally.  :func:`detect_all` handles
every stream and symbol of a block at once in the (K+M)-dimensional stream
domain, using ``(A V A^H + s I)^-1 A = A (V A^H A + s I)^-1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RECEIVER_MODES = ("linear_icl_ocl", "pic_icl", "modified_pic_icl_ocl", "linear_icl_only")


@dataclass(frozen=True)
class StackedModel:
    A: np.ndarray
    noise_var: float
    K: int
    powers: np.ndarray | None = None

    @property
    def num_streams(self) -> int:
        return self.A.shape[1]

    @property
    def rho(self) -> np.ndarray:
        if self.powers is None:
            return np.ones(self.num_streams)
        return np.broadcast_to(np.asarray(self.powers, dtype=float), (self.num_streams,))


@dataclass
class DetectorOutput:
    r_tilde: np.ndarray
    mu: np.ndarray
    sigma_z2: np.ndarray


@dataclass
class SoftSymbolState:
    """``means`` / ``variances`` of shape (K+M,) or (K+M, T)."""

    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def no_prior(cls, num_streams: int, T: int | None = None, energy: float = 1.0):
        shape = (num_streams,) if T is None else (num_streams, T)
        return cls(np.zeros(shape, dtype=complex), np.full(shape, energy))


def interference_covariance(model: StackedModel, d: int, variances) -> np.ndarray:
    """``sum_{i != d} a_i v_i a_i^H + noise_var I``."""
    v = np.array(variances, dtype=float)
    v[d] = 0.0
    A = model.A
    return (A * v) @ A.conj().T + model.noise_var * np.eye(A.shape[0])


def mmse_filter(model: StackedModel, d: int, variances) -> np.ndarray:
    """MMSE combining vector for stream ``d`` given the other streams' residual energies."""
    rho = model.rho[d]
    a = model.A[:, d]
    C = rho * np.outer(a, a.conj()) + interference_covariance(model, d, variances)
    return rho * np.linalg.solve(C, a)


def modified_pic_detect(model: StackedModel, y, d: int, soft: SoftSymbolState, w) -> DetectorOutput:
    """Cancel the soft estimates of every other stream, then filter with ``w``."""
    A = model.A
    means = np.array(soft.means, dtype=complex)
    means[d] = 0.0
    cleaned = y - A @ means
    r_tilde = np.vdot(w, cleaned)
    mu = np.vdot(w, A[:, d])
    Q = interference_covariance(model, d, soft.variances)
    sigma_z2 = float(np.real(np.vdot(w, Q @ w)))
    return DetectorOutput(r_tilde, mu, sigma_z2)


def receiver_soft_state(mode: str, soft: SoftSymbolState, K: int) -> SoftSymbolState:
    """Soft state as seen by a given receiver.

    Linear receivers use no prior knowledge (zero means, unit energy).  The
    conventional PIC only cancels the first ``K`` streams, so the OCL streams
    keep zero mean and full energy.
    """
    if mode not in RECEIVER_MODES:
        raise ValueError(f"unknown receiver mode {mode!r}")
    if mode in ("linear_icl_ocl", "linear_icl_only"):
        return SoftSymbolState(np.zeros_like(soft.means), np.ones_like(soft.variances))
    if mode == "pic_icl":
        means = np.array(soft.means, copy=True)
        var = np.array(soft.variances, copy=True)
        means[K:] = 0.0
        var[K:] = 1.0
        return SoftSymbolState(means, var)
    return soft


def detect_all(model: StackedModel, Y, soft: SoftSymbolState, mode: str = "modified_pic_icl_ocl") -> DetectorOutput:
    """PIC + MMSE outputs for every stream of a block.

    Args:
        model: stacked channel model (NL x S).
        Y: received data symbols, NL x T.
        soft: current soft state, arrays of shape (S, T).
        mode: receiver variant, see :data:`RECEIVER_MODES`.

    Returns:
        DetectorOutput with arrays of shape (S, T).
    """
    soft = receiver_soft_state(mode, soft, model.K)
    A = model.A
    S = A.shape[1]
    Y = np.asarray(Y).reshape(A.shape[0], -1)
    T = Y.shape[1]
    means = np.broadcast_to(soft.means, (S, T)).T  # T x S
    var = np.broadcast_to(soft.variances, (S, T)).T
    rho = model.rho
    s2 = model.noise_var

    gram = A.conj().T @ A  # S x S
    matched = (A.conj().T @ Y).T  # T x S

    eye = np.eye(S)
    # V_d is diag(var) with entry d set to rho_d, so V_d Gamma + s2 I differs
    # from the shared V Gamma + s2 I by the rank-one term (rho_d - v_d) e_d Gamma[d, :]
    base_inv = np.linalg.inv(var[:, :, None] * gram[None] + s2 * eye)  # (T, S, S)
    col = base_inv.transpose(0, 2, 1)  # col[t, d] = base_inv[t][:, d]
    gain = rho[None, :] - var  # (T, S)
    gb = np.einsum("ds,tsd->td", gram, base_inv)  # (Gamma base_inv)[d, d]
    x = col * (rho[None, :] / (1.0 + gain * gb))[..., None]  # (T, d, S), w_d = A x_d
    Vd = np.repeat(var[:, None, :], S, axis=1)

    xc = x.conj()
    mu = np.einsum("tds,sd->td", xc, gram)
    # A^H y - Gamma r_bar, then add back stream d's own mean
    cancel = matched - means @ gram.T
    r_tilde = np.einsum("tds,ts->td", xc, cancel) + mu * means

    # sigma_z^2 = x^H Gamma V_d0 Gamma x + s2 x^H Gamma x
    Vd0 = Vd.copy()
    Vd0[:, np.arange(S), np.arange(S)] = 0.0
    gx = np.einsum("su,tdu->tds", gram, x)
    sigma_z2 = (np.einsum("tds,tds->td", Vd0, np.abs(gx) ** 2)
                + s2 * np.real(np.einsum("tds,tds->td", xc, gx)))
    return DetectorOutput(r_tilde.T, mu.T, np.maximum(sigma_z2.T, 1e-300))
