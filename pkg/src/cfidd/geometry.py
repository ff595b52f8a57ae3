"""Network layout, large-scale fading and block-fading channel draws.

Positions are in km; large-scale coefficients follow the 3GPP urban
microcell pathloss with log-normal shadowing.  Channels are stacked per AP,
so rows ``l*N:(l+1)*N`` of ``H`` and ``G`` belong to AP ``l``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

MIN_DISTANCE_KM = 1e-3  # 1 m reference distance of the pathloss formula

OCL_PLACEMENTS = ("in_square", "surrounding_ring")


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of one clustered cell-free network."""

    L: int = 32
    N: int = 4
    K: int = 8
    M: int = 4
    D: float = 1.0
    pathloss_offset_db: float = -30.5
    pathloss_exponent_coeff: float = 36.7
    shadow_std_db: float = 4.0
    ocl_placement: str = "surrounding_ring"

    def __post_init__(self):
        for name in ("L", "N", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        # M = 0 is accepted for interference-free reference runs
        if self.M < 0:
            raise ValueError("M must be >= 0")
        if not self.D > 0:
            raise ValueError("D must be positive")
        if self.shadow_std_db < 0:
            raise ValueError("shadow_std_db must be non-negative")
        if self.ocl_placement not in OCL_PLACEMENTS:
            raise ValueError(f"unknown ocl_placement {self.ocl_placement!r}")

    @property
    def num_antennas(self) -> int:
        return self.L * self.N


@dataclass(frozen=True)
class NetworkScenario:
    """One coherence block worth of geometry and channels.

    ``beta_ue`` is L x K and ``beta_ocl`` is L x M, both linear scale.
    ``H`` (NL x K) and ``G`` (NL x M) stay ``None`` until
    :func:`draw_channels` fills them.
    """

    config: NetworkConfig
    ap_positions: np.ndarray
    ue_positions: np.ndarray
    ocl_positions: np.ndarray
    beta_ue: np.ndarray | None = None
    beta_ocl: np.ndarray | None = None
    H: np.ndarray | None = field(default=None, repr=False)
    G: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self, include_channels: bool = True) -> dict:
        out = {
            "config": self.config.__dict__.copy(),
            "ap_positions": self.ap_positions.tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "ocl_positions": self.ocl_positions.tolist(),
            "beta_ue": None if self.beta_ue is None else self.beta_ue.tolist(),
            "beta_ocl": None if self.beta_ocl is None else self.beta_ocl.tolist(),
        }
        if include_channels:
            out["H"] = None if self.H is None else _complex_to_list(self.H)
            out["G"] = None if self.G is None else _complex_to_list(self.G)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkScenario":
        config = NetworkConfig(**data["config"])

        def arr(key, shape2):
            value = data.get(key)
            if value is None:
                return None
            return np.asarray(value, dtype=float).reshape(-1, shape2)

        return cls(
            config=config,
            ap_positions=arr("ap_positions", 2),
            ue_positions=arr("ue_positions", 2),
            ocl_positions=arr("ocl_positions", 2),
            beta_ue=arr("beta_ue", config.K),
            beta_ocl=None if data.get("beta_ocl") is None
            else np.asarray(data["beta_ocl"], dtype=float).reshape(config.L, config.M),
            H=_list_to_complex(data.get("H")),
            G=_list_to_complex(data.get("G")),
        )


def _complex_to_list(a: np.ndarray) -> list:
    # interleaved (re, im) along the last axis
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _list_to_complex(value) -> np.ndarray | None:
    if value is None:
        return None
    a = np.asarray(value, dtype=float)
    if a.size == 0:
        # an NL x 0 matrix serialises as a list of empty rows
        return np.zeros(a.shape if a.ndim == 2 else (0,), dtype=complex)
    return a[..., 0] + 1j * a[..., 1]


def save_scenario(scenario: NetworkScenario, path, include_channels: bool = True) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(include_channels)))


def load_scenario(path) -> NetworkScenario:
    return NetworkScenario.from_dict(json.loads(Path(path).read_text()))


def _ring_points(rng: np.random.Generator, count: int, D: float) -> np.ndarray:
    """Uniform points on the 2D x 2D square centred on the cluster, minus the cluster."""
    out = np.empty((0, 2))
    while len(out) < count:
        cand = rng.uniform(-D / 2, 3 * D / 2, size=(2 * (count - len(out)) + 4, 2))
        inside = np.all((cand >= 0) & (cand <= D), axis=1)
        out = np.vstack([out, cand[~inside]])
    return out[:count]


def place_nodes(config: NetworkConfig, seed) -> NetworkScenario:
    """Draw AP, UE and OCL interferer positions (km)."""
    rng = np.random.default_rng(seed)
    D = config.D
    aps = rng.uniform(0, D, size=(config.L, 2))
    ues = rng.uniform(0, D, size=(config.K, 2))
    if config.ocl_placement == "in_square":
        ocl = rng.uniform(0, D, size=(config.M, 2))
    else:
        ocl = _ring_points(rng, config.M, D)
    return NetworkScenario(config, aps, ues, ocl)


def pathloss_db(d_km, config: NetworkConfig | None = None, shadow_db=0.0):
    """Large-scale gain in dB at distance ``d_km``.

    Raises:
        ValueError: if any distance is not strictly positive.
    """
    config = config or NetworkConfig()
    d_km = np.asarray(d_km, dtype=float)
    if np.any(~(d_km > 0)):
        raise ValueError("distance must be positive")
    d_m = 1000.0 * d_km
    out = config.pathloss_offset_db - config.pathloss_exponent_coeff * np.log10(d_m) + shadow_db
    return float(out) if out.ndim == 0 else out


def _distances(ap: np.ndarray, pts: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(ap[:, None, :] - pts[None, :, :], axis=-1)
    return np.maximum(d, MIN_DISTANCE_KM)


def large_scale_fading(scenario: NetworkScenario, seed) -> NetworkScenario:
    """Fill ``beta_ue`` and ``beta_ocl`` from distances plus shadowing."""
    cfg = scenario.config
    rng = np.random.default_rng(seed)
    d_ue = _distances(scenario.ap_positions, scenario.ue_positions)
    d_ocl = _distances(scenario.ap_positions, scenario.ocl_positions)
    sh_ue = rng.normal(0.0, cfg.shadow_std_db, size=d_ue.shape)
    sh_ocl = rng.normal(0.0, cfg.shadow_std_db, size=d_ocl.shape)
    beta_ue = 10 ** (pathloss_db(d_ue, cfg, sh_ue) / 10)
    beta_ocl = 10 ** (pathloss_db(d_ocl, cfg, sh_ocl) / 10) if cfg.M else np.zeros((cfg.L, 0))
    return replace(scenario, beta_ue=np.atleast_2d(beta_ue), beta_ocl=np.asarray(beta_ocl).reshape(cfg.L, cfg.M))


def _rayleigh(rng: np.random.Generator, beta: np.ndarray, N: int) -> np.ndarray:
    L, cols = beta.shape
    w = (rng.standard_normal((L, N, cols)) + 1j * rng.standard_normal((L, N, cols))) / np.sqrt(2)
    return (np.sqrt(beta)[:, None, :] * w).reshape(L * N, cols)


def draw_channels(scenario: NetworkScenario, seed) -> NetworkScenario:
    """Uncorrelated Rayleigh block-fading draws scaled by the large-scale gains."""
    if scenario.beta_ue is None or scenario.beta_ocl is None:
        raise ValueError("large-scale coefficients must be filled first")
    rng = np.random.default_rng(seed)
    N = scenario.config.N
    H = _rayleigh(rng, scenario.beta_ue, N)
    G = _rayleigh(rng, scenario.beta_ocl, N)
    return replace(scenario, H=H, G=G)


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def make_scenario(config: NetworkConfig, seed) -> NetworkScenario:
    """Positions, large-scale fading and channels from a single seed."""
    s_pos, s_beta, s_ch = seed_sequence(seed).spawn(3)
    scenario = place_nodes(config, s_pos)
    scenario = large_scale_fading(scenario, s_beta)
    return draw_channels(scenario, s_ch)
