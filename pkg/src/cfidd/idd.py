"""Iterative detection and decoding over the coherence blocks of one codeword.

Each UE sends one LDPC codeword.  Its interleaved coded bits are mapped to
symbols and spread over as many coherence blocks as needed (``tau_u`` data
symbols each); every block has its own small-scale channel draw, pilot
phase and estimates.  One IDD pass detects every block with the current
a-priori LLRs, demaps to extrinsic LLRs, decodes, and feeds the decoder's
extrinsic LLRs back as the next pass's a-priori information.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import ldpc
from .detection import RECEIVER_MODES, SoftSymbolState, StackedModel, detect_all
from .errors import ConfigurationError
from .estimation import (complex_noise, default_rank, estimate_block, make_pilots,
                         qpsk_symbols, received_pilot_block)
from .geometry import (NetworkConfig, draw_channels, large_scale_fading, place_nodes,
                       seed_sequence)
from .modem import Constellation, extrinsic_llrs, soft_stats
from .snr import calibrate_noise


OCL_FEEDBACK = ("constellation", "gaussian")


@dataclass(frozen=True)
class IddConfig:
    idd_iterations: int = 3
    decoder_iters: int = 10
    receiver_mode: str = "modified_pic_icl_ocl"
    llr_clip: float = ldpc.LLR_CLIP
    ocl_feedback: str = "gaussian"

    def __post_init__(self):
        if self.ocl_feedback not in OCL_FEEDBACK:
            raise ConfigurationError(f"unknown ocl_feedback {self.ocl_feedback!r}")
        if self.idd_iterations < 1:
            raise ConfigurationError("idd_iterations must be >= 1")
        if self.receiver_mode not in RECEIVER_MODES:
            raise ConfigurationError(f"unknown receiver mode {self.receiver_mode!r}")


@dataclass(frozen=True)
class LinkConfig:
    """Everything about the physical link apart from the receiver choice."""

    network: NetworkConfig = field(default_factory=NetworkConfig)
    tau_p: int = 10
    tau_u: int = 190
    modulation: str = "qpsk"
    pilot_power: float = 1.0
    est_rank: int | None = None
    est_stage: str = "post"
    snr_averaging: str = "per_realization"
    genie_channel: bool = False

    def __post_init__(self):
        if self.tau_p < self.network.K:
            raise ConfigurationError(f"tau_p={self.tau_p} < K={self.network.K}")
        if self.tau_u < 1:
            raise ConfigurationError("tau_u must be >= 1")


@dataclass
class DataBlock:
    """Detector input for one coherence block: model and NL x T observations."""

    model: StackedModel
    Y: np.ndarray


@dataclass
class BlockResult:
    decoded_bits: np.ndarray
    bit_errors: int
    frame_errors: int
    total_bits: int
    per_iteration_ber: np.ndarray
    per_iteration_bit_errors: np.ndarray
    per_iteration_frame_errors: np.ndarray


def make_interleaver(n: int, seed=0) -> np.ndarray:
    return np.random.default_rng(seed).permutation(n)


def gaussian_soft_update(r_tilde, mu, sigma_z2) -> SoftSymbolState:
    """LMMSE estimate of a unit-power symbol from ``r_tilde = mu r + z``.

    Used for OCL streams whose estimated channel is only known up to an
    unknown mixing of the interferers, so their symbols are not points of
    the constellation.
    """
    mu = np.asarray(mu)
    den = np.abs(mu) ** 2 + sigma_z2
    return SoftSymbolState(np.conj(mu) * r_tilde / den, sigma_z2 / den)


def _ocl_prior_mask(mode: str) -> tuple[bool, bool]:
    """(use decoder feedback for UEs, use soft feedback for OCL streams)."""
    if mode == "modified_pic_icl_ocl":
        return True, True
    if mode == "pic_icl":
        return True, False
    return False, False


def run_block(blocks: list[DataBlock], code: ldpc.LdpcCode, const: Constellation,
              config: IddConfig, info_bits, interleaver=None, trace: list | None = None) -> BlockResult:
    """Run the detector/decoder loop for one codeword per UE.

    Args:
        blocks: coherence blocks carrying the codewords, in transmission order.
        info_bits: K x k transmitted messages (for error counting).
        interleaver: permutation ``pi`` with transmitted bit ``j`` being
            coded bit ``pi[j]``; identity if omitted.
        trace: if a list is given, one dict per IDD pass is appended with
            the LLRs exchanged in that pass.
    """
    K = blocks[0].model.K
    n, Mc = code.n, const.bits_per_symbol
    lengths = [b.Y.shape[1] for b in blocks]
    if n % Mc or sum(lengths) != n // Mc:
        raise ConfigurationError(
            f"blocks carry {sum(lengths)} symbols but a codeword needs {n / Mc}")
    pi = np.arange(n) if interleaver is None else np.asarray(interleaver)
    info_bits = np.asarray(info_bits)
    use_ue, use_ocl = _ocl_prior_mask(config.receiver_mode)

    priors_tx = np.zeros((K, n))  # a-priori LLRs in transmission order
    ocl_priors = [np.zeros((b.model.num_streams - K, t, Mc)) for b, t in zip(blocks, lengths)]
    ocl_soft = [SoftSymbolState.no_prior(b.model.num_streams - K, t) for b, t in zip(blocks, lengths)]
    ber, bit_err, frame_err = [], [], []
    # receivers without feedback repeat the same pass; run it once
    passes = config.idd_iterations if (use_ue or use_ocl) else 1
    for it in range(passes):
        det_tx = np.empty((K, n))
        start = 0
        for bi, (blk, T) in enumerate(zip(blocks, lengths)):
            sl = slice(start * Mc, (start + T) * Mc)
            ue_pri = priors_tx[:, sl].reshape(K, T, Mc) if use_ue else np.zeros((K, T, Mc))
            ocl_pri = ocl_priors[bi] if use_ocl else np.zeros_like(ocl_priors[bi])
            pri = np.concatenate([ue_pri, ocl_pri], axis=0)
            means, var = soft_stats(pri, const)
            if use_ocl and config.ocl_feedback == "gaussian":
                means[K:], var[K:] = ocl_soft[bi].means, ocl_soft[bi].variances
            out = detect_all(blk.model, blk.Y, SoftSymbolState(means, var), config.receiver_mode)
            ext = extrinsic_llrs(out.r_tilde, out.mu, out.sigma_z2, pri, const, clip=config.llr_clip)
            det_tx[:, sl] = ext[:K].reshape(K, T * Mc)
            if use_ocl:
                ocl_priors[bi] = ext[K:]
                ocl_soft[bi] = gaussian_soft_update(out.r_tilde[K:], out.mu[K:], out.sigma_z2[K:])
            start += T

        intrinsic = np.empty_like(det_tx)
        intrinsic[:, pi] = det_tx
        dec = ldpc.decode(code, intrinsic, max_iters=config.decoder_iters, clip=config.llr_clip)
        decoded = ldpc.extract_message(code, dec.hard_bits)
        errs = decoded != info_bits
        bit_err.append(int(errs.sum()))
        frame_err.append(int(errs.any(axis=1).sum()))
        ber.append(bit_err[-1] / info_bits.size)
        if trace is not None:
            trace.append({"iteration": it + 1, "detector_priors": priors_tx[:, np.argsort(pi)].copy(),
                          "decoder_intrinsic": intrinsic.copy(), "decoder_extrinsic": dec.extrinsic.copy(),
                          "decoder_posterior": dec.posterior.copy()})
        priors_tx = dec.extrinsic[:, pi]

    for lst in (ber, bit_err, frame_err):
        lst.extend([lst[-1]] * (config.idd_iterations - passes))
    return BlockResult(decoded_bits=decoded, bit_errors=bit_err[-1], frame_errors=frame_err[-1],
                       total_bits=int(info_bits.size), per_iteration_ber=np.array(ber),
                       per_iteration_bit_errors=np.array(bit_err),
                       per_iteration_frame_errors=np.array(frame_err))


# ------------------------------------------------------------ trial setup

@dataclass
class TrialResult:
    results: dict
    nmse_channel: float
    nmse_interference: float


def block_lengths(n: int, Mc: int, tau_u: int) -> list[int]:
    n_sym = n // Mc
    count = math.ceil(n_sym / tau_u)
    return [min(tau_u, n_sym - b * tau_u) for b in range(count)]


def _stacked(H_hat, G_hat, noise_var, K):
    return StackedModel(np.concatenate([H_hat, G_hat], axis=1), noise_var, K)


def simulate_trial(link: LinkConfig, code: ldpc.LdpcCode, const: Constellation, modes,
                   snr_db: float, seed, idd: IddConfig | None = None,
                   interleaver=None, geometry=None) -> TrialResult:
    """Draw one codeword per UE, transmit it, and run every receiver on it.

    All receivers see the same geometry, channels, bits and noise.  The
    ``linear_icl_only`` receiver observes the same link with the OCL
    transmitters switched off in both the pilot and data phases.

    Args:
        geometry: optional scenario with positions and large-scale gains to
            reuse (frozen geometry); drawn from ``seed`` otherwise.
    """
    idd = idd or IddConfig()
    net = link.network
    K, M, Mc = net.K, net.M, const.bits_per_symbol
    ss = seed_sequence(seed)
    s_geo, s_beta, s_bits, s_blocks = ss.spawn(4)
    scenario = geometry
    if scenario is None:
        scenario = large_scale_fading(place_nodes(net, s_geo), s_beta)
    pilots = make_pilots(link.tau_p, K, link.pilot_power)
    rank = link.est_rank if link.est_rank is not None else default_rank(M, link.tau_p, K)

    rng = np.random.default_rng(s_bits)
    info = rng.integers(0, 2, size=(K, code.k), dtype=np.uint8)
    coded = ldpc.encode(code, info)
    pi = np.arange(code.n) if interleaver is None else np.asarray(interleaver)
    x_all = const.map(coded[:, pi])  # K x n/Mc

    lengths = block_lengths(code.n, Mc, link.tau_u)
    ocl_blocks, clean_blocks = [], []
    nmse_ch, nmse_int = [], []
    start = 0
    for T, s_blk in zip(lengths, s_blocks.spawn(len(lengths))):
        s_ch, s_sym = s_blk.spawn(2)
        sc = draw_channels(scenario, s_ch)
        H, G = sc.H, sc.G
        r = np.random.default_rng(s_sym)
        noise_var = calibrate_noise(H, snr_db, N=net.N, beta=sc.beta_ue, averaging=link.snr_averaging)
        S_pilot = qpsk_symbols(r, (link.tau_p, M))
        s_data = const.points[r.integers(0, len(const.points), size=(M, T))]
        n_pilot = complex_noise(r, (H.shape[0], link.tau_p), noise_var)
        n_data = complex_noise(r, (H.shape[0], T), noise_var)
        x = x_all[:, start:start + T]
        start += T

        Yp_clean = received_pilot_block(H, G[:, :0], pilots, S_pilot[:, :0], 0.0) + n_pilot
        Yp = Yp_clean + G @ S_pilot.conj().T
        Yd_clean = H @ x + n_data
        Yd = Yd_clean + G @ s_data

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = estimate_block(Yp, pilots, M, rank, link.est_stage, split="unit_power",
                                 H=H, G=G, S=S_pilot)
        est_clean = estimate_block(Yp_clean, pilots, 0, H=H)
        nmse_ch.append(est.nmse_channel)
        nmse_int.append(est.nmse_interference)

        if link.genie_channel:
            ocl_blocks.append(DataBlock(_stacked(H, G, noise_var, K), Yd))
            clean_blocks.append(DataBlock(StackedModel(H, noise_var, K), Yd_clean))
        else:
            ocl_blocks.append(DataBlock(_stacked(est.H_hat, est.G_hat, noise_var, K), Yd))
            clean_blocks.append(DataBlock(StackedModel(est_clean.H_hat, noise_var, K), Yd_clean))

    results = {}
    for mode in modes:
        cfg = replace(idd, receiver_mode=mode)
        blocks = clean_blocks if mode == "linear_icl_only" else ocl_blocks
        results[mode] = run_block(blocks, code, const, cfg, info, pi)
    return TrialResult(results, _mean_db(nmse_ch), _mean_db(nmse_int))


def _mean_db(values) -> float:
    v = np.asarray([x for x in values if np.isfinite(x)])
    if len(v) == 0:
        return float("nan")
    return float(10 * np.log10(np.mean(10 ** (v / 10))))
