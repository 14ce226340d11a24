"""Hidden Markov model estimation: Viterbi decoding and training, adjusted
Viterbi training, nodes and barriers, streaming decoding and limit measures.

Positions and states are 0-based throughout the library.
"""
from .alignment_stream import (
    BarrierSpec,
    NodeEvent,
    RegenStats,
    Segment,
    SegmentScores,
    StreamingDecoder,
    certify_barrier,
    cycle_tallies,
    detect_node,
    find_barrier,
    is_barrier,
    regeneration_summary,
    segment_scores,
    streaming_decode,
)
from .corrections import (
    AnalyticCorrections,
    CorrectionTable,
    LimitMeasureEstimate,
    MonteCarloCorrections,
    VoronoiPartition1D,
    ZeroCorrections,
    corrections_from_limits,
    estimate_limit_measures,
    mc_limits,
    mixture_limits,
    mixture_partition_1d,
)
from .errors import (
    AllPathsImpossible,
    BadEmissionParam,
    CorrectionUnavailable,
    DegenerateVariance,
    EmptyCell,
    EmptyClass,
    EmptyClassInAllReplicas,
    HmmvaError,
    InstanceTooLarge,
    ModelFormatError,
    NegativeEntry,
    NoRegenerations,
    NonStationaryInitial,
    NonStochasticRow,
    NumericalError,
    ParameterError,
    PeriodicChain,
    ReducibleChain,
)
from .model import (
    Categorical,
    Gaussian,
    GaussianKnownVariance,
    HmmParams,
    Realization,
    WeightedSample,
    check_cluster,
    check_dominance,
    emission_logpdf,
    sample_hmm,
    stationary_distribution,
    validate_params,
    weighted_mle,
)
from .training import EmpiricalEstimates, TrainState, em_train, empirical_estimates, va_train, vt_train
from .viterbi import (
    Alignment,
    Trellis,
    backtrack_canonical,
    brute_force_optimal_set,
    forward_trellis,
    path_log_likelihood,
    viterbi,
)

__version__ = "0.1.0"

__all__ = [
    "Alignment",
    "AllPathsImpossible",
    "AnalyticCorrections",
    "BadEmissionParam",
    "BarrierSpec",
    "Categorical",
    "CorrectionTable",
    "CorrectionUnavailable",
    "DegenerateVariance",
    "EmpiricalEstimates",
    "EmptyCell",
    "EmptyClass",
    "EmptyClassInAllReplicas",
    "Gaussian",
    "GaussianKnownVariance",
    "HmmParams",
    "HmmvaError",
    "InstanceTooLarge",
    "LimitMeasureEstimate",
    "ModelFormatError",
    "MonteCarloCorrections",
    "NegativeEntry",
    "NoRegenerations",
    "NodeEvent",
    "NonStationaryInitial",
    "NonStochasticRow",
    "NumericalError",
    "ParameterError",
    "PeriodicChain",
    "Realization",
    "ReducibleChain",
    "RegenStats",
    "Segment",
    "SegmentScores",
    "StreamingDecoder",
    "TrainState",
    "Trellis",
    "VoronoiPartition1D",
    "WeightedSample",
    "ZeroCorrections",
    "backtrack_canonical",
    "brute_force_optimal_set",
    "certify_barrier",
    "check_cluster",
    "check_dominance",
    "corrections_from_limits",
    "cycle_tallies",
    "detect_node",
    "em_train",
    "emission_logpdf",
    "empirical_estimates",
    "estimate_limit_measures",
    "find_barrier",
    "forward_trellis",
    "is_barrier",
    "mc_limits",
    "mixture_limits",
    "mixture_partition_1d",
    "path_log_likelihood",
    "regeneration_summary",
    "sample_hmm",
    "segment_scores",
    "stationary_distribution",
    "streaming_decode",
    "va_train",
    "validate_params",
    "viterbi",
    "vt_train",
    "weighted_mle",
]
