"""Markov-modulated jump-diffusion: simulation and maximum-likelihood estimation."""

from .errors import (
    BridgeStallError,
    DataError,
    EstimationError,
    MmjdError,
    ValidationError,
)
from .mixture_em import EmResult, MixtureState, default_init, run_em
from .model import (
    IntensityMatrix,
    MjpPath,
    MmjdParams,
    ObservationGrid,
    delta_drift,
    validate,
)
from .segmentation import (
    Cluster,
    Gap,
    PartialMjpPath,
    Segment,
    build_partial_path,
    classify_cluster,
    split_clusters,
)
from .sem import (
    SemResult,
    SufficientStats,
    fisher_ci,
    mle_q,
    run_sem,
    sample_bridge,
    stats_from_path,
)
from .simulate import SimulatedPath, sample_laplace_jump, simulate_mjp, simulate_mmjd
from .yields import (
    JumpPartition,
    ThresholdSuggestion,
    YieldSeries,
    detect_jumps,
    estimate_eta,
    log_yields,
    suggest_threshold,
)

__all__ = [
    "BridgeStallError",
    "Cluster",
    "DataError",
    "EmResult",
    "EstimationError",
    "Gap",
    "IntensityMatrix",
    "JumpPartition",
    "MixtureState",
    "MjpPath",
    "MmjdError",
    "MmjdParams",
    "ObservationGrid",
    "PartialMjpPath",
    "Segment",
    "SemResult",
    "SimulatedPath",
    "SufficientStats",
    "ThresholdSuggestion",
    "ValidationError",
    "YieldSeries",
    "build_partial_path",
    "classify_cluster",
    "default_init",
    "delta_drift",
    "detect_jumps",
    "estimate_eta",
    "fisher_ci",
    "log_yields",
    "mle_q",
    "run_em",
    "run_sem",
    "sample_bridge",
    "sample_laplace_jump",
    "simulate_mjp",
    "simulate_mmjd",
    "split_clusters",
    "stats_from_path",
    "suggest_threshold",
    "validate",
]

__version__ = "0.1.0"
