"""Monte Carlo sweeps, persistence and the experiment configuration schema."""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
from scipy.stats import binomtest

from . import ldpc
from .detection import RECEIVER_MODES
from .errors import ConfigurationError
from .estimation import (complex_noise, estimate_block, make_pilots, qpsk_symbols,
                         received_pilot_block)
from .geometry import NetworkConfig, large_scale_fading, make_scenario, place_nodes, seed_sequence
from .idd import IddConfig, LinkConfig, make_interleaver, simulate_trial
from .modem import get_constellation
from .snr import calibrate_noise

log = logging.getLogger(__name__)

CSV_HEADER = ["snr_db", "mode", "idd_iter", "ber", "fer", "nmse_ch_db", "nmse_int_db",
              "trials", "ci_low", "ci_high"]
WORKERS_ENV = "CFIDD_WORKERS"

DEFAULT_CONFIG = {
    "network": asdict(NetworkConfig()),
    "idd": {"idd_iterations": 3, "decoder_iters": 10, "llr_clip": 50.0, "ocl_feedback": "gaussian"},
    "modes": list(RECEIVER_MODES),
    "snr_grid_db": [-5, 0, 5, 10, 15, 20, 25],
    "trials": 10000,
    "tau_p": 10,
    "tau_u": 190,
    "modulation": "qpsk",
    "pilot_power": 1.0,
    "est_rank": None,
    "est_stage": "post",
    "snr_averaging": "per_realization",
    "freeze_geometry": False,
    "genie_channel": False,
    "code": {"n": 512, "k": 256, "seed": 0},
    "interleaver_seed": 1,
    "master_seed": 2024,
    "output_path": "results",
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": list(DEFAULT_CONFIG),
    "properties": {
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "L": {"type": "integer", "minimum": 1},
                "N": {"type": "integer", "minimum": 1},
                "K": {"type": "integer", "minimum": 1},
                "M": {"type": "integer", "minimum": 0},
                "D": {"type": "number", "exclusiveMinimum": 0},
                "pathloss_offset_db": {"type": "number"},
                "pathloss_exponent_coeff": {"type": "number"},
                "shadow_std_db": {"type": "number", "minimum": 0},
                "ocl_placement": {"enum": ["in_square", "surrounding_ring"]},
            },
        },
        "idd": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "idd_iterations": {"type": "integer", "minimum": 1},
                "decoder_iters": {"type": "integer", "minimum": 1},
                "llr_clip": {"type": "number", "exclusiveMinimum": 0},
                "ocl_feedback": {"enum": ["constellation", "gaussian"]},
            },
        },
        "modes": {"type": "array", "minItems": 1, "items": {"enum": list(RECEIVER_MODES)}},
        "snr_grid_db": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "trials": {"type": "integer", "minimum": 1},
        "tau_p": {"type": "integer", "minimum": 1},
        "tau_u": {"type": "integer", "minimum": 1},
        "modulation": {"enum": ["qpsk", "qam16"]},
        "pilot_power": {"type": "number", "exclusiveMinimum": 0},
        "est_rank": {"type": ["integer", "null"], "minimum": 1},
        "est_stage": {"enum": ["pre", "post"]},
        "snr_averaging": {"enum": ["per_realization", "ensemble"]},
        "freeze_geometry": {"type": "boolean"},
        "genie_channel": {"type": "boolean"},
        "code": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "k", "seed"],
            "properties": {"n": {"type": "integer"}, "k": {"type": "integer"},
                           "seed": {"type": "integer", "minimum": 0}},
        },
        "interleaver_seed": {"type": "integer", "minimum": 0},
        "master_seed": {"type": "integer", "minimum": 0},
        "output_path": {"type": "string"},
    },
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``a.b=value`` overrides; values are parsed as JSON when possible."""
    out = copy.deepcopy(config)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = _parse_value(text)
    return out


def resolve_config(config: dict | None = None, overrides=None) -> dict:
    """Fill defaults, apply overrides and validate against the schema."""
    resolved = apply_overrides(_merge(DEFAULT_CONFIG, config or {}), overrides)
    try:
        jsonschema.validate(resolved, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigurationError(f"invalid config: {exc.message}") from exc
    if resolved["tau_p"] < resolved["network"]["K"]:
        raise ConfigurationError("tau_p must be >= K")
    return resolved


def load_config(path, overrides=None) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return resolve_config(data, overrides)


# ------------------------------------------------------------- statistics

def binomial_ci(errors: int, total: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for an error rate."""
    if total == 0:
        return 0.0, 1.0
    ci = binomtest(int(errors), int(total)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


# ------------------------------------------------------------------ sweep

@dataclass
class SweepRow:
    snr_db: float
    mode: str
    idd_iter: int
    ber: float
    fer: float
    nmse_ch_db: float
    nmse_int_db: float
    trials: int
    ci_low: float
    ci_high: float
    bit_errors: int = 0
    total_bits: int = 0


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def select(self, mode: str, idd_iter: int | None = None) -> list:
        return [r for r in self.rows if r.mode == mode and (idd_iter is None or r.idd_iter == idd_iter)]

    def ber(self, mode: str, snr_db: float, idd_iter: int) -> SweepRow:
        for r in self.rows:
            if r.mode == mode and r.idd_iter == idd_iter and r.snr_db == snr_db:
                return r
        raise KeyError((mode, snr_db, idd_iter))


def link_config(cfg: dict) -> LinkConfig:
    return LinkConfig(network=NetworkConfig(**cfg["network"]), tau_p=cfg["tau_p"], tau_u=cfg["tau_u"],
                      modulation=cfg["modulation"], pilot_power=cfg["pilot_power"],
                      est_rank=cfg["est_rank"], est_stage=cfg["est_stage"],
                      snr_averaging=cfg["snr_averaging"], genie_channel=cfg["genie_channel"])


def _trial_seed(master_seed: int, trial: int) -> np.random.SeedSequence:
    # trials share seeds across SNR points and receivers (common random numbers)
    return np.random.SeedSequence([master_seed, trial])


def _run_chunk(cfg: dict, snr_db: float, trial_ids) -> dict:
    """Error counts summed over a chunk of trials; order-independent."""
    link = link_config(cfg)
    code = ldpc.build_code(cfg["code"]["n"], cfg["code"]["k"], seed=cfg["code"]["seed"],
                           max_iters=cfg["idd"]["decoder_iters"])
    const = get_constellation(cfg["modulation"])
    pi = make_interleaver(code.n, cfg["interleaver_seed"])
    idd = IddConfig(**{k: v for k, v in cfg["idd"].items()})
    geometry = None
    if cfg["freeze_geometry"]:
        s_geo, s_beta = seed_sequence([cfg["master_seed"], 2 ** 31]).spawn(2)
        geometry = large_scale_fading(place_nodes(link.network, s_geo), s_beta)
    I = idd.idd_iterations
    acc = {m: {"bits": np.zeros(I, dtype=np.int64), "frames": np.zeros(I, dtype=np.int64)}
           for m in cfg["modes"]}
    acc["_meta"] = {"total_bits": 0, "total_frames": 0, "nmse_ch": 0.0, "nmse_int": 0.0,
                    "n_int": 0, "trials": 0}
    for t in trial_ids:
        res = simulate_trial(link, code, const, cfg["modes"], snr_db, _trial_seed(cfg["master_seed"], t),
                             idd, pi, geometry)
        for m in cfg["modes"]:
            acc[m]["bits"] += res.results[m].per_iteration_bit_errors
            acc[m]["frames"] += res.results[m].per_iteration_frame_errors
        meta = acc["_meta"]
        first = res.results[cfg["modes"][0]]
        meta["total_bits"] += first.total_bits
        meta["total_frames"] += first.decoded_bits.shape[0]
        # per-trial NMSE averaged in dB: linear averages are outlier-dominated
        meta["nmse_ch"] += res.nmse_channel
        if np.isfinite(res.nmse_interference):
            meta["nmse_int"] += res.nmse_interference
            meta["n_int"] += 1
        meta["trials"] += 1
    return acc


def _reduce(parts: list) -> dict:
    out = parts[0]
    for p in parts[1:]:
        for key, val in p.items():
            for k2, v2 in val.items():
                out[key][k2] = out[key][k2] + v2
    return out


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(cfg: dict, workers: int | None = None, progress=None, chunk: int = 50) -> SweepResult:
    """BER/FER for every SNR x receiver x IDD-iteration cell.

    Each trial is one codeword per UE with a fresh geometry (unless
    ``freeze_geometry``).  Trials are split into chunks of ``chunk`` for the
    worker pool; results depend only on the config, never on the worker count
    or chunking.
    """
    cfg = resolve_config(cfg)
    workers = workers or default_workers()
    t0 = time.perf_counter()
    result = SweepResult(config=cfg)
    n_trials = cfg["trials"]
    chunks = [list(range(i, min(i + chunk, n_trials))) for i in range(0, n_trials, chunk)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for snr in cfg["snr_grid_db"]:
            if workers > 1:
                with ProcessPoolExecutor(workers) as ex:
                    parts = list(ex.map(_run_chunk, [cfg] * len(chunks), [snr] * len(chunks), chunks))
            else:
                parts = [_run_chunk(cfg, snr, c) for c in chunks]
            acc = _reduce(parts)
            meta = acc["_meta"]
            nmse_ch = meta["nmse_ch"] / meta["trials"]
            nmse_int = meta["nmse_int"] / meta["n_int"] if meta["n_int"] else float("nan")
            for mode in cfg["modes"]:
                for i in range(cfg["idd"]["idd_iterations"]):
                    errs = int(acc[mode]["bits"][i])
                    lo, hi = binomial_ci(errs, meta["total_bits"])
                    result.rows.append(SweepRow(
                        snr_db=float(snr), mode=mode, idd_iter=i + 1,
                        ber=errs / meta["total_bits"],
                        fer=int(acc[mode]["frames"][i]) / meta["total_frames"],
                        nmse_ch_db=nmse_ch, nmse_int_db=nmse_int, trials=meta["trials"],
                        ci_low=lo, ci_high=hi, bit_errors=errs, total_bits=meta["total_bits"]))
            log.info("snr %s dB done (%.1f s)", snr, time.perf_counter() - t0)
            if progress:
                progress(snr)
    result.wall_time = time.perf_counter() - t0
    return result


# ------------------------------------------------------------ persistence

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def results_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


def emit_results(result: SweepResult, path, stem: str = "sweep") -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and the ``<stem>.json`` config sidecar into ``path``."""
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    csv_path.write_text(results_csv(result))
    json_path.write_text(json.dumps({"config": result.config,
                                     "master_seed": result.config.get("master_seed")},
                                    indent=2, sort_keys=True))
    return csv_path, json_path


def read_results(csv_path) -> SweepResult:
    result = SweepResult()
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for row in reader:
            result.rows.append(SweepRow(
                snr_db=float(row["snr_db"]), mode=row["mode"], idd_iter=int(row["idd_iter"]),
                ber=float(row["ber"]), fer=float(row["fer"]), nmse_ch_db=float(row["nmse_ch_db"]),
                nmse_int_db=float(row["nmse_int_db"]), trials=int(row["trials"]),
                ci_low=float(row["ci_low"]), ci_high=float(row["ci_high"])))
    return result


# ------------------------------------------------------------ NMSE study

NMSE_HEADER = ["snr_db", "nmse_ch_db", "nmse_int_pre_db", "nmse_int_post_db", "trials"]


def run_nmse(cfg: dict, rank: int | None = 1) -> list[dict]:
    """Channel and interference estimation NMSE versus SNR.

    Each realization gives one NMSE in dB and the rows hold their mean.  The
    pathloss spread across a draw is tens of dB, so linear averages (of ratios
    or of energies) are dominated by a handful of realizations.
    """
    cfg = resolve_config(cfg)
    net = NetworkConfig(**cfg["network"])
    pilots = make_pilots(cfg["tau_p"], net.K, cfg["pilot_power"])
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for snr in cfg["snr_grid_db"]:
            acc = np.zeros(3)
            for t in range(cfg["trials"]):
                s_sc, s_rest = _trial_seed(cfg["master_seed"], t).spawn(2)
                sc = make_scenario(net, s_sc)
                rng = np.random.default_rng(s_rest)
                noise_var = calibrate_noise(sc.H, snr, N=net.N, beta=sc.beta_ue,
                                            averaging=cfg["snr_averaging"])
                S = qpsk_symbols(rng, (cfg["tau_p"], net.M))
                Y = received_pilot_block(sc.H, sc.G, pilots, S, 0.0) + complex_noise(
                    rng, (sc.H.shape[0], cfg["tau_p"]), noise_var)
                pre = estimate_block(Y, pilots, net.M, rank, "pre", H=sc.H, G=sc.G, S=S)
                post = estimate_block(Y, pilots, net.M, rank, "post", H=sc.H, G=sc.G, S=S)
                acc += [post.nmse_channel, pre.nmse_interference, post.nmse_interference]
            ch_db, pre_db, post_db = (acc / cfg["trials"]).tolist()
            rows.append({"snr_db": float(snr), "nmse_ch_db": ch_db, "nmse_int_pre_db": pre_db,
                         "nmse_int_post_db": post_db, "trials": cfg["trials"]})
    return rows


# ------------------------------------------------------------- LDPC bench

def ldpc_bench(ebn0_db, frames: int = 10000, n: int = 512, k: int = 256, code_seed: int = 0,
               max_iters: int = 10, seed: int = 7, batch: int = 500) -> list[dict]:
    """BPSK/AWGN bit and frame error rates of the box-plus decoder."""
    code = ldpc.build_code(n, k, seed=code_seed, max_iters=max_iters)
    rows = []
    for snr in np.atleast_1d(ebn0_db):
        rng = np.random.default_rng([seed, int(round(float(snr) * 1000)) + 10 ** 6])
        sigma2 = 1.0 / (2 * code.rate * 10 ** (snr / 10))
        bit_err = frame_err = 0
        done = 0
        while done < frames:
            b = min(batch, frames - done)
            msg = rng.integers(0, 2, size=(b, code.k), dtype=np.uint8)
            x = 2.0 * ldpc.encode(code, msg) - 1.0
            y = x + np.sqrt(sigma2) * rng.standard_normal(x.shape)
            res = ldpc.decode(code, 2 * y / sigma2)
            errs = ldpc.extract_message(code, res.hard_bits) != msg
            bit_err += int(errs.sum())
            frame_err += int(errs.any(axis=1).sum())
            done += b
        rows.append({"ebn0_db": float(snr), "ber": bit_err / (frames * code.k),
                     "fer": frame_err / frames, "frames": frames, "bit_errors": bit_err})
    return rows
