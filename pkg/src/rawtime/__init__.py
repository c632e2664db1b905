"""Delivery-time analysis for IEEE 802.11ah restricted access windows.

Computes the probability distribution of the time a group of contending
stations needs to deliver frames inside a RAW slot (for one tagged station
and for the whole group), validates the analytical chains against a built-in
slot-level Monte-Carlo simulator, and applies the distributions to size RAW
slots and optimize station grouping.
"""

__version__ = "0.1.0"

from .params import (
    AH_CW_MAX,
    AH_CW_MIN,
    AH_RETRY_LIMIT,
    AH_SLOT_DURATIONS,
    ConfigurationError,
    ModelParams,
    SlotDurations,
    ah_params,
)
from .txprob import TxProbTable, build_tx_prob_table
from .layers import (
    StateLayerA,
    StateLayerB,
    cond_tx_prob_state,
    step_process_a,
    step_process_b,
)
from .chains import ChainDiagnostics, ChainResult, run_chains, state_time
from .distribution import (
    TimeDistribution,
    UnsatisfiableQuantileError,
    atom_differences,
    distribution_quantile,
    dominant_peaks,
    kolmogorov_distance,
    load_distribution,
    merge_weighted,
)
from .simulate import EmpiricalDistribution, SimConfig, simulate
from .planner import (
    MAX_RAW_SLOT_US,
    Conditioning,
    DistributionCache,
    GroupPlan,
    MixtureSpec,
    auto_k_stride,
    mixture_pa,
    mixture_pb,
    mixture_weights,
    optimize_groups,
    plan_slot_duration,
)

__all__ = [
    "AH_CW_MAX",
    "AH_CW_MIN",
    "AH_RETRY_LIMIT",
    "AH_SLOT_DURATIONS",
    "ChainDiagnostics",
    "ChainResult",
    "Conditioning",
    "ConfigurationError",
    "DistributionCache",
    "EmpiricalDistribution",
    "GroupPlan",
    "MAX_RAW_SLOT_US",
    "MixtureSpec",
    "ModelParams",
    "SimConfig",
    "SlotDurations",
    "StateLayerA",
    "StateLayerB",
    "TimeDistribution",
    "TxProbTable",
    "UnsatisfiableQuantileError",
    "ah_params",
    "atom_differences",
    "auto_k_stride",
    "build_tx_prob_table",
    "cond_tx_prob_state",
    "distribution_quantile",
    "dominant_peaks",
    "kolmogorov_distance",
    "load_distribution",
    "merge_weighted",
    "mixture_pa",
    "mixture_pb",
    "mixture_weights",
    "optimize_groups",
    "plan_slot_duration",
    "run_chains",
    "simulate",
    "state_time",
    "step_process_a",
    "step_process_b",
    "__version__",
]
