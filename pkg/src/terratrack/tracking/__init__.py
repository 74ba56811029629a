from .kalman import KalmanCV, KalmanError, kf_predict, kf_update, rollout
from .tracker import (
    AdaptiveGateParams,
    AssociationOutcome,
    Condition,
    FrameOrderError,
    Lifecycle,
    Tracker,
    TrackerConfig,
    TrackInstance,
    TrackReport,
    adaptive_threshold,
    associate_frame,
    lifecycle_step,
    track_step,
)
from ..assignment import hungarian_assign

__all__ = [
    "KalmanCV", "KalmanError", "kf_predict", "kf_update", "rollout", "AdaptiveGateParams",
    "AssociationOutcome", "Condition", "FrameOrderError", "Lifecycle", "Tracker", "TrackerConfig",
    "TrackInstance", "TrackReport", "adaptive_threshold", "associate_frame", "lifecycle_step",
    "track_step", "hungarian_assign",
]
