from .association import (
    Assignment,
    associate,
    confidence_penalty,
    iou,
    jaccard_distance,
    matching_cost,
)
from .hog import DESCRIPTOR_LEN, compute_descriptor, descriptor_distance
from .kalman import KalmanModel, kalman_predict, kalman_update, observation_matrix, transition_matrix
from .tracker import (
    BOAT,
    CLASS_NAMES,
    Detection2D,
    Track2D,
    Tracker2D,
    TrackerConfig,
    TrackStatus,
    class_name,
)

__all__ = [
    "Assignment",
    "associate",
    "confidence_penalty",
    "iou",
    "jaccard_distance",
    "matching_cost",
    "DESCRIPTOR_LEN",
    "compute_descriptor",
    "descriptor_distance",
    "KalmanModel",
    "kalman_predict",
    "kalman_update",
    "observation_matrix",
    "transition_matrix",
    "BOAT",
    "CLASS_NAMES",
    "Detection2D",
    "Track2D",
    "Tracker2D",
    "TrackerConfig",
    "TrackStatus",
    "class_name",
]
