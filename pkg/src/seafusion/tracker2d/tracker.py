"""Image-plane multi-object tracker with a tentative/confirmed/deleted lifecycle."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import SequencingError
from ..geometry import BBox2D
from .association import PENALTY_BOOSTED, PENALTY_LITERAL, DEFAULT_GATE, associate, matching_cost
from .hog import compute_descriptor, descriptor_distance
from .kalman import KalmanModel, kalman_predict, kalman_update

logger = logging.getLogger(__name__)

BOAT = 0
CLASS_NAMES: Dict[int, str] = {BOAT: "boat"}


def class_name(class_id: Optional[int]) -> str:
    if class_id is None:
        return "unknown"
    return CLASS_NAMES.get(int(class_id), f"class{int(class_id)}")


@dataclass(frozen=True)
class Detection2D:
    box: BBox2D
    class_id: int = BOAT
    confidence: float = 1.0
    frame_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    DELETED = "deleted"


@dataclass
class TrackerConfig:
    confirm_frames: int = 3
    max_misses: int = 10
    add_confidence: float = 0.5
    kalman_warmup: int = 10
    descriptor_delete_threshold: float = 1.5
    use_appearance: bool = True
    gate: float = DEFAULT_GATE
    penalty_mode: str = PENALTY_BOOSTED
    process_var: float = 1e-2
    meas_var: float = 1.0
    init_var: float = 10.0

    def __post_init__(self):
        for name in ("confirm_frames", "max_misses", "kalman_warmup"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("add_confidence", "descriptor_delete_threshold", "gate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.penalty_mode not in (PENALTY_BOOSTED, PENALTY_LITERAL):
            raise ValueError(f"unknown penalty_mode {self.penalty_mode!r}")

    def kalman_model(self) -> KalmanModel:
        return KalmanModel.constant_acceleration(
            dt=1.0, process_var=self.process_var, meas_var=self.meas_var, init_var=self.init_var
        )


@dataclass
class Track2D:
    id: int
    state: np.ndarray
    covariance: np.ndarray
    box: np.ndarray  # output box (x_min, y_min, x_max, y_max)
    class_id: int = BOAT
    confidence: float = 1.0
    descriptor: Optional[np.ndarray] = None
    hits: int = 1
    misses: int = 0
    age: int = 1
    status: TrackStatus = TrackStatus.TENTATIVE

    @property
    def predicted_box(self) -> np.ndarray:
        return self.state[:4].copy()

    def bbox(self) -> BBox2D:
        return BBox2D(*self.box)


class Tracker2D:
    """Stateful tracker; call :meth:`step` once per frame in frame order."""

    def __init__(self, config: Optional[TrackerConfig] = None):
        self.config = config or TrackerConfig()
        self.model = self.config.kalman_model()
        self.tracks: List[Track2D] = []
        self.next_id = 1
        self.last_frame: Optional[int] = None

    def _spawn(self, det: Detection2D, descriptor) -> Track2D:
        x, P = self.model.initial_state(det.box.as_tuple())
        track = Track2D(
            id=self.next_id,
            state=x,
            covariance=P,
            box=det.box.as_array(),
            class_id=det.class_id,
            confidence=det.confidence,
            descriptor=descriptor,
        )
        self.next_id += 1
        if track.hits >= self.config.confirm_frames:
            track.status = TrackStatus.CONFIRMED
        return track

    def step(
        self,
        frame_index: int,
        detections: Sequence[Detection2D],
        patches: Optional[Sequence] = None,
    ) -> List[Track2D]:
        """Advance one frame; returns the confirmed tracks."""
        cfg = self.config
        if self.last_frame is not None and frame_index <= self.last_frame:
            raise SequencingError(f"frame {frame_index} after frame {self.last_frame}")
        for det in detections:
            if det.frame_index != frame_index:
                raise SequencingError(
                    f"detection for frame {det.frame_index} passed to frame {frame_index}"
                )
        self.last_frame = frame_index

        descriptors: List[Optional[np.ndarray]] = [None] * len(detections)
        if cfg.use_appearance and patches is not None:
            if len(patches) != len(detections):
                raise ValueError("patches must align with detections")
            descriptors = [None if p is None else compute_descriptor(p) for p in patches]

        for t in self.tracks:
            t.state, t.covariance = kalman_predict(t.state, t.covariance, self.model)
            t.age += 1

        cost = np.array(
            [
                [
                    matching_cost(
                        t.predicted_box,
                        d.box,
                        d.confidence,
                        t.descriptor,
                        descriptors[j],
                        cfg.use_appearance,
                        cfg.penalty_mode,
                    )
                    for j, d in enumerate(detections)
                ]
                for t in self.tracks
            ]
        ).reshape(len(self.tracks), len(detections))
        assignment = associate(cost, gate=cfg.gate)

        unmatched_dets = set(assignment.unmatched_cols)
        matched_tracks = set()
        for ti, dj in assignment.matches:
            t, d = self.tracks[ti], detections[dj]
            desc = descriptors[dj]
            if (
                cfg.use_appearance
                and desc is not None
                and t.descriptor is not None
                and descriptor_distance(t.descriptor, desc) > cfg.descriptor_delete_threshold
            ):
                # appearance changed too much: the track ends, the detection is free
                t.status = TrackStatus.DELETED
                unmatched_dets.add(dj)
                continue
            t.state, t.covariance = kalman_update(t.state, t.covariance, d.box.as_array(), self.model)
            t.box = d.box.as_array()
            t.confidence = d.confidence
            t.class_id = d.class_id
            if desc is not None:
                t.descriptor = desc
            t.hits += 1
            t.misses = 0
            matched_tracks.add(t.id)

        for t in self.tracks:
            if t.id in matched_tracks or t.status is TrackStatus.DELETED:
                continue
            t.misses += 1
            t.hits = 0
            if t.age >= cfg.kalman_warmup:
                t.box = t.predicted_box

        for dj in sorted(unmatched_dets):
            d = detections[dj]
            if d.confidence > cfg.add_confidence:
                self.tracks.append(self._spawn(d, descriptors[dj]))

        for t in self.tracks:
            if t.status is TrackStatus.TENTATIVE and t.hits >= cfg.confirm_frames:
                t.status = TrackStatus.CONFIRMED
            if t.misses >= cfg.max_misses:
                t.status = TrackStatus.DELETED
        for t in self.tracks:
            if t.status is TrackStatus.DELETED:
                logger.debug("track %d deleted at frame %d", t.id, frame_index)
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.DELETED]
        return [t for t in self.tracks if t.status is TrackStatus.CONFIRMED]
