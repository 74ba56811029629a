from .memory import (
    EmptyBank,
    MemoryBank,
    MemoryBankFormatError,
    MemoryHit,
    ZeroVector,
    cosine_distance,
    memory_write,
    retrieve_topk,
)
from .predictor import (
    Anchor,
    DegenerateHeading,
    DisplacementSlopeEncoder,
    HistoryEncoder,
    OnlineMemoryWriter,
    PredictionResult,
    Predictor,
    PredictorConfig,
    candidate_errors,
    encode_history,
    kf_short_horizon,
    normalize_trajectory,
    predict,
    select_best,
    smooth_window,
    training_pairs,
)

__all__ = [
    "EmptyBank", "MemoryBank", "MemoryBankFormatError", "MemoryHit", "ZeroVector", "cosine_distance",
    "memory_write", "retrieve_topk", "Anchor", "DegenerateHeading", "DisplacementSlopeEncoder",
    "HistoryEncoder", "OnlineMemoryWriter", "PredictionResult", "Predictor", "PredictorConfig",
    "candidate_errors", "encode_history", "kf_short_horizon", "normalize_trajectory", "predict",
    "select_best", "smooth_window", "training_pairs",
]
