"""Link-level simulator for an asynchronous overloaded sparse-code uplink.

The package covers the full receive chain: codebook and factor-graph
construction (:mod:`.core`), zero-tailed pilot frames (:mod:`.txchain`),
fading and superposition (:mod:`.channel`), sparse delay estimation
(:mod:`.delayest`), multiuser detection (:mod:`.decode`), recovery-bound
checks (:mod:`.ripcheck`) and seeded Monte-Carlo sweeps
(:mod:`.experiments`), plus an HTTP service and CLI on top.
"""

__version__ = "0.1.0"

from .core import (
    CodebookSet,
    FactorGraph,
    build_factor_graph,
    codebook_from_json,
    codebook_to_json,
    default_codebook_set,
)
from .txchain import DelayProfile, UserFrame, delay_pad, generate_pilot
from .channel import ChannelRealization, ReceivedFrame, draw_channel, transmit
from .delayest import (
    FbOptions,
    SelectionEstimate,
    ShiftMatrix,
    delay_mae,
    estimate_delays,
    fb_lasso,
    ls_estimate,
    shift_matrix,
    soft_threshold,
    stack_shift_matrices,
)
from .decode import (
    AlignmentSchedule,
    LlrTable,
    McmcParams,
    align,
    decode_frame,
    llrs_to_bits,
    log_mpa,
    map_oracle,
    mcmc_decode,
)
from .ripcheck import (
    gershgorin_check,
    gram,
    rip_delta_exhaustive,
    rip_failure_bound,
    tail_bound_mc,
)
from .config import ExperimentConfig, RipcheckConfig, load_experiment_config
from .experiments import run_ber_experiment, run_mae_experiment, run_rip_experiment

__all__ = [
    "__version__",
    "CodebookSet",
    "FactorGraph",
    "build_factor_graph",
    "codebook_from_json",
    "codebook_to_json",
    "default_codebook_set",
    "DelayProfile",
    "UserFrame",
    "delay_pad",
    "generate_pilot",
    "ChannelRealization",
    "ReceivedFrame",
    "draw_channel",
    "transmit",
    "FbOptions",
    "SelectionEstimate",
    "ShiftMatrix",
    "delay_mae",
    "estimate_delays",
    "fb_lasso",
    "ls_estimate",
    "shift_matrix",
    "soft_threshold",
    "stack_shift_matrices",
    "AlignmentSchedule",
    "LlrTable",
    "McmcParams",
    "align",
    "decode_frame",
    "llrs_to_bits",
    "log_mpa",
    "map_oracle",
    "mcmc_decode",
    "gershgorin_check",
    "gram",
    "rip_delta_exhaustive",
    "rip_failure_bound",
    "tail_bound_mc",
    "ExperimentConfig",
    "RipcheckConfig",
    "load_experiment_config",
    "run_ber_experiment",
    "run_mae_experiment",
    "run_rip_experiment",
]
