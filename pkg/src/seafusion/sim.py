"""Synthetic marine scenarios: moving box-shaped hulls seen by a ray-cast LiDAR
and a pinhole camera with a noisy, lossy detector model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .cloud import OrientedBox, PointCloud
from .errors import InvalidScenarioError
from .fusion3d import FrameBundle
from .geometry import BBox2D, CalibrationModel, project_points
from .tracker2d.tracker import BOAT, Detection2D


@dataclass
class BoatActor:
    length: float
    width: float
    height: float
    x: float
    y: float
    yaw: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    class_id: int = BOAT
    gt_track_id: int = 1

    def position(self, t: float) -> np.ndarray:
        return np.array(
            [
                self.x + self.vx * t + 0.5 * self.ax * t * t,
                self.y + self.vy * t + 0.5 * self.ay * t * t,
            ]
        )

    def footprint(self, t: float) -> np.ndarray:
        """Hull corners (4, 2) counter-clockwise in the sea frame."""
        box = OrientedBox(np.append(self.position(t), 0.0), self.yaw, self.length, self.width)
        return box.corners()

    def box(self, t: float) -> OrientedBox:
        return OrientedBox(np.append(self.position(t), 0.0), self.yaw % math.pi, self.length, self.width, self.height)


@dataclass
class LidarModel:
    angular_resolution: float = 0.2  # degrees between azimuth steps
    max_range: float = 100.0
    range_noise: float = 0.0
    elevations: Tuple[float, ...] = tuple(float(e) for e in range(-15, 16, 2))  # degrees
    mount_height: float = 1.0  # sensor height above the sea surface


@dataclass
class CameraModel:
    focal: float = 800.0
    width: int = 1280
    height: int = 720
    yaw: float = 0.0  # optical axis heading in the sensor frame, radians
    offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def calibration(self) -> CalibrationModel:
        K = np.array(
            [[self.focal, 0.0, self.width / 2], [0.0, self.focal, self.height / 2], [0.0, 0.0, 1.0]]
        )
        # sensor frame: x forward, y left, z up; camera: x right, y down, z forward
        axes = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        heading = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        R = axes @ heading
        t = -R @ np.asarray(self.offset, dtype=float)
        return CalibrationModel.from_matrix(K @ np.hstack([R, t[:, None]]), self.width, self.height)


@dataclass
class DetectorModel:
    dropout: float = 0.0
    confidence_low: float = 0.6
    confidence_high: float = 1.0
    jitter: float = 0.0  # pixels, per box coordinate
    min_size: float = 2.0  # pixels; smaller clipped boxes are not reported


@dataclass
class SeaState:
    roll_amplitude: float = 0.0  # degrees
    pitch_amplitude: float = 0.0
    period: float = 4.0  # seconds

    def quaternion(self, t: float) -> Optional[np.ndarray]:
        if self.roll_amplitude == 0 and self.pitch_amplitude == 0:
            return None
        phase = 2 * math.pi * t / self.period
        roll = self.roll_amplitude * math.sin(phase)
        pitch = self.pitch_amplitude * math.sin(phase + math.pi / 3)
        return Rotation.from_euler("xyz", [roll, pitch, 0.0], degrees=True).as_quat()


@dataclass
class ScenarioConfig:
    boats: List[BoatActor] = field(default_factory=list)
    frame_rate: float = 10.0
    duration: float = 10.0
    lidar: LidarModel = field(default_factory=LidarModel)
    camera: CameraModel = field(default_factory=CameraModel)
    detector: DetectorModel = field(default_factory=DetectorModel)
    sea: SeaState = field(default_factory=SeaState)
    seed: int = 0

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.frame_rate))

    def validate(self):
        if not self.frame_rate > 0:
            raise InvalidScenarioError("frame_rate must be positive")
        if not self.duration > 0:
            raise InvalidScenarioError("duration must be positive")
        d = self.detector
        if not 0 <= d.dropout <= 1:
            raise InvalidScenarioError("dropout must be a probability")
        if not 0 <= d.confidence_low <= d.confidence_high <= 1:
            raise InvalidScenarioError("confidence bounds must satisfy 0 <= low <= high <= 1")
        if d.jitter < 0 or self.lidar.range_noise < 0:
            raise InvalidScenarioError("noise levels must be non-negative")
        if not self.lidar.angular_resolution > 0 or not self.lidar.max_range > 0:
            raise InvalidScenarioError("lidar resolution and range must be positive")
        ids = [b.gt_track_id for b in self.boats]
        if len(set(ids)) != len(ids):
            raise InvalidScenarioError("gt_track_id values must be unique")
        for b in self.boats:
            if min(b.length, b.width, b.height) <= 0:
                raise InvalidScenarioError(f"boat {b.gt_track_id} has non-positive hull dimensions")
            if _inside(b.footprint(0.0), np.zeros(2)):
                raise InvalidScenarioError(f"boat {b.gt_track_id} overlaps the sensor origin")


def _inside(poly: np.ndarray, p: np.ndarray) -> bool:
    """Point in convex counter-clockwise polygon (boundary counts as inside)."""
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        if (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) < 0:
            return False
    return True


# -- LiDAR ray casting --------------------------------------------------------


def _azimuths(resolution_deg: float) -> np.ndarray:
    n = int(math.floor(360.0 / resolution_deg + 1e-9))
    return np.radians(np.arange(n) * resolution_deg)


def _cast_horizontal(footprints: Sequence[np.ndarray], azimuths: np.ndarray, origin: np.ndarray):
    """Nearest hull hit per azimuth: (distance, boat index); inf / -1 when nothing is hit."""
    D = np.stack([np.cos(azimuths), np.sin(azimuths)], axis=1)
    best_t = np.full(azimuths.shape[0], np.inf)
    best_b = np.full(azimuths.shape[0], -1)
    for b, poly in enumerate(footprints):
        for i in range(4):
            p0, p1 = poly[i] - origin, poly[(i + 1) % 4] - origin
            E = p1 - p0
            denom = D[:, 0] * E[1] - D[:, 1] * E[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (p0[0] * E[1] - p0[1] * E[0]) / denom
                s = (p0[0] * D[:, 1] - p0[1] * D[:, 0]) / denom
            hit = (denom != 0) & (t > 0) & (s >= 0) & (s <= 1) & (t < best_t)
            best_t[hit] = t[hit]
            best_b[hit] = b
    return best_t, best_b


def cast_scene(
    footprints: Sequence[np.ndarray],
    heights: Sequence[float],
    lidar: LidarModel,
    rng: Optional[np.random.Generator] = None,
    origin=(0.0, 0.0),
) -> Tuple[np.ndarray, np.ndarray]:
    """Ray-cast every hull at once so nearer hulls occlude farther ones.

    Returns (points (N, 3) in the sea-aligned sensor frame, boat index per point).
    """
    origin = np.asarray(origin, dtype=float)
    az = _azimuths(lidar.angular_resolution)
    t, b = _cast_horizontal(footprints, az, origin)
    hit = np.flatnonzero(np.isfinite(t))
    if hit.size == 0 or not lidar.elevations:
        return np.zeros((0, 3)), np.zeros(0, dtype=int)

    elev = np.radians(np.asarray(lidar.elevations, dtype=float))
    T = np.repeat(t[hit], elev.size)
    A = np.repeat(az[hit], elev.size)
    B = np.repeat(b[hit], elev.size)
    E = np.tile(elev, hit.size)
    z = T * np.tan(E)
    top = np.asarray(heights, dtype=float)[B] - lidar.mount_height
    r = T / np.cos(E)
    keep = (z >= -lidar.mount_height) & (z <= top) & (r <= lidar.max_range)
    r, A, E, B = r[keep], A[keep], E[keep], B[keep]
    if lidar.range_noise > 0 and rng is not None:
        r = r + rng.normal(0.0, lidar.range_noise, r.shape[0])
    pts = np.stack(
        [origin[0] + r * np.cos(E) * np.cos(A), origin[1] + r * np.cos(E) * np.sin(A), r * np.sin(E)], axis=1
    )
    return pts, B


def sample_hull_points(boat: BoatActor, t: float, lidar: LidarModel, rng=None, origin=(0.0, 0.0)) -> np.ndarray:
    pts, _ = cast_scene([boat.footprint(t)], [boat.height], lidar, rng, origin)
    return pts


# -- camera / detector --------------------------------------------------------


def hull_corners_3d(boat: BoatActor, t: float, mount_height: float) -> np.ndarray:
    fp = boat.footprint(t)
    bottom = np.c_[fp, np.full(4, -mount_height)]
    top = np.c_[fp, np.full(4, boat.height - mount_height)]
    return np.vstack([bottom, top])


def ground_truth_box(calib: CalibrationModel, corners: np.ndarray) -> Optional[BBox2D]:
    """Bounding rectangle of the projected corners; None unless all are in front."""
    uv, front = project_points(calib, corners)
    if not np.all(front):
        return None
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    if not (lo[0] < hi[0] and lo[1] < hi[1]):
        return None
    return BBox2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def clip_box(box: BBox2D, width: int, height: int) -> Optional[BBox2D]:
    x0, y0 = max(box.x_min, 0.0), max(box.y_min, 0.0)
    x1, y1 = min(box.x_max, float(width)), min(box.y_max, float(height))
    if x0 < x1 and y0 < y1:
        return BBox2D(x0, y0, x1, y1)
    return None


@dataclass
class BoatTruth:
    gt_track_id: int
    class_id: int
    box3d: OrientedBox
    box2d: Optional[BBox2D]  # unclipped projection; None when not fully in front
    in_view: bool
    n_points: int


@dataclass
class FrameTruth:
    frame_index: int
    timestamp: float
    boats: List[BoatTruth]


@dataclass
class Scenario:
    config: ScenarioConfig
    calibration: CalibrationModel
    frames: List[FrameBundle]
    truth: List[FrameTruth]


def generate_scenario(config: ScenarioConfig) -> Scenario:
    """Deterministic for a given config (seed included)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    calib = config.camera.calibration()
    lidar, det_model = config.lidar, config.detector
    frames, truth = [], []

    for k in range(config.n_frames):
        ts = k / config.frame_rate
        q = config.sea.quaternion(ts)
        to_sensor = None if q is None else Rotation.from_quat(q).inv()

        footprints = [b.footprint(ts) for b in config.boats]
        pts, owner = cast_scene(footprints, [b.height for b in config.boats], lidar, rng)
        if to_sensor is not None and pts.shape[0]:
            pts = to_sensor.apply(pts)

        detections, boats = [], []
        for i, boat in enumerate(config.boats):
            corners = hull_corners_3d(boat, ts, lidar.mount_height)
            if to_sensor is not None:
                corners = to_sensor.apply(corners)
            gt2d = ground_truth_box(calib, corners)
            visible = clip_box(gt2d, calib.image_width, calib.image_height) if gt2d else None
            in_view = visible is not None and min(
                visible.x_max - visible.x_min, visible.y_max - visible.y_min
            ) >= det_model.min_size
            boats.append(BoatTruth(boat.gt_track_id, boat.class_id, boat.box(ts), gt2d, in_view, int(np.sum(owner == i))))

            # draws happen for every boat so dropout does not shift the random stream
            drop = rng.random() < det_model.dropout
            conf = rng.uniform(det_model.confidence_low, det_model.confidence_high)
            noise = rng.normal(0.0, det_model.jitter, 4) if det_model.jitter > 0 else np.zeros(4)
            if not in_view or drop:
                continue
            c = np.array(visible.as_tuple()) + noise
            x0, x1 = sorted((c[0], c[2]))
            y0, y1 = sorted((c[1], c[3]))
            if x1 - x0 < 1e-6 or y1 - y0 < 1e-6:
                continue
            detections.append(Detection2D(BBox2D(x0, y0, x1, y1), boat.class_id, float(conf), k, ts))

        frames.append(
            FrameBundle(
                k,
                PointCloud(ts, pts),
                detections,
                q,
                {"cloud": ts, "detections": ts, "orientation": ts},
            )
        )
        truth.append(FrameTruth(k, ts, boats))
    return Scenario(config, calib, frames, truth)


# -- scenario config file -----------------------------------------------------


def _build(cls, data: Optional[dict], where: str):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InvalidScenarioError(f"unknown keys in {where}: {', '.join(unknown)}")
    if "elevations" in data:
        data["elevations"] = tuple(float(e) for e in data["elevations"])
    if "offset" in data:
        data["offset"] = tuple(float(e) for e in data["offset"])
    try:
        return cls(**data)
    except TypeError as exc:
        raise InvalidScenarioError(f"{where}: {exc}") from None


def scenario_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data or {})
    top = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise InvalidScenarioError(f"unknown scenario keys: {', '.join(unknown)}")
    boats = [_build(BoatActor, b, f"boat {i + 1}") for i, b in enumerate(data.pop("boats", None) or [])]
    cfg = ScenarioConfig(
        boats=boats,
        lidar=_build(LidarModel, data.pop("lidar", None), "lidar"),
        camera=_build(CameraModel, data.pop("camera", None), "camera"),
        detector=_build(DetectorModel, data.pop("detector", None), "detector"),
        sea=_build(SeaState, data.pop("sea", None), "sea"),
        **data,
    )
    cfg.validate()
    return cfg


def load_scenario(path) -> ScenarioConfig:
    import yaml

    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(yaml.safe_load(fh) or {})


def three_boat_scenario(duration=10.0, dropout=0.0, seed=0, **detector) -> ScenarioConfig:
    """Three boats at least 25 m apart: two crossing the camera view, one astern."""
    boats = [
        BoatActor(10.0, 3.0, 2.5, 30.0, -12.0, 0.0, vx=0.0, vy=1.0, gt_track_id=1),
        BoatActor(8.0, 2.5, 2.0, 50.0, 25.0, math.pi / 2, vx=-0.5, vy=-0.3, gt_track_id=2),
        BoatActor(12.0, 4.0, 3.0, -30.0, 5.0, 0.3, vx=0.8, vy=0.0, gt_track_id=3),
    ]
    return ScenarioConfig(
        boats=boats,
        duration=duration,
        detector=DetectorModel(dropout=dropout, **detector),
        seed=seed,
    )
