"""Link-level simulator for cell-free massive MIMO uplink with iterative detection and decoding."""

from .detection import RECEIVER_MODES, StackedModel, detect_all, mmse_filter, modified_pic_detect
from .errors import ConfigurationError, EstimationInfeasibleError
from .estimation import estimate_block, make_pilots
from .geometry import NetworkConfig, make_scenario
from .harness import resolve_config, run_sweep, emit_results
from .idd import IddConfig, LinkConfig, simulate_trial
from .ldpc import build_code, decode, encode
from .modem import get_constellation
from .snr import calibrate_noise

__all__ = [
    "RECEIVER_MODES", "StackedModel", "detect_all", "mmse_filter", "modified_pic_detect",
    "ConfigurationError", "EstimationInfeasibleError", "estimate_block", "make_pilots",
    "NetworkConfig", "make_scenario", "resolve_config", "run_sweep", "emit_results",
    "IddConfig", "LinkConfig", "simulate_trial", "build_code", "decode", "encode",
    "get_constellation", "calibrate_noise",
]
