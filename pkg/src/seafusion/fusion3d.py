"""Camera/LiDAR fusion: frustum extraction, cluster selection, 3D tracking by
centroid distance and hybrid labeling of the all-cloud obstacle map."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import cloud as cl
from .errors import SequencingError
from .geometry import CalibrationModel, Frustum, build_frustum, contains_points
from .tracker2d.tracker import Detection2D


class Source(str, enum.Enum):
    CAMERA_FUSED = "camera_fused"
    LIDAR_ONLY = "lidar_only"


class Strategy(str, enum.Enum):
    LARGEST = "largest"
    NEAREST = "nearest"


@dataclass(frozen=True)
class Obstacle3D:
    track_id: int
    box: cl.OrientedBox
    label: Optional[int]
    source: Source
    centroid: np.ndarray
    frame_index: int


@dataclass
class Track3D:
    id: int
    last_centroid: np.ndarray
    misses: int = 0
    label: Optional[int] = None

    @property
    def color_seed(self) -> int:
        # Knuth multiplicative hash: stable, well-spread colors per id
        return (self.id * 2654435761) % 2**32


@dataclass(frozen=True)
class Observation:
    centroid: np.ndarray
    box: cl.OrientedBox
    label: Optional[int] = None


@dataclass
class FusionConfig:
    track_distance_threshold: float = 5.0
    max_misses_3d: int = 10
    selection_strategy: Strategy = Strategy.LARGEST
    hybrid_match_distance: float = 3.0
    frustum_min_size: int = 5
    sticky_labels: bool = True

    def __post_init__(self):
        self.selection_strategy = Strategy(self.selection_strategy)
        for name in ("track_distance_threshold", "max_misses_3d", "hybrid_match_distance", "frustum_min_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def extract_frustum_points(cloud, frustum: Frustum) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, cl.PointCloud) else np.asarray(cloud, dtype=float).reshape(-1, 3)
    return np.flatnonzero(contains_points(frustum, pts))


def select_obstacle_cluster(
    clusters: Sequence[cl.Cluster], strategy=Strategy.LARGEST, apex=(0.0, 0.0, 0.0)
) -> Optional[cl.Cluster]:
    if not clusters:
        return None
    apex = np.asarray(apex, dtype=float)
    dist = [float(np.linalg.norm(c.centroid - apex)) for c in clusters]
    if Strategy(strategy) is Strategy.LARGEST:
        key = lambda i: (-len(clusters[i]), dist[i], i)
    else:
        key = lambda i: (dist[i], -len(clusters[i]), i)
    return clusters[min(range(len(clusters)), key=key)]


def _greedy_pairs(dist: np.ndarray, threshold: float) -> List[Tuple[int, int]]:
    """One-to-one pairs in ascending distance, skipping pairs above threshold.

    Ties resolve by row then column index.
    """
    if dist.size == 0:
        return []
    rows, cols = np.nonzero(dist <= threshold)
    order = np.lexsort((cols, rows, dist[rows, cols]))
    used_r, used_c, pairs = set(), set(), []
    for k in order:
        r, c = int(rows[k]), int(cols[k])
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        pairs.append((r, c))
    return pairs


def _distance_matrix(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> np.ndarray:
    if not a or not b:
        return np.zeros((len(a), len(b)))
    A = np.asarray(a, dtype=float)[:, :2]
    B = np.asarray(b, dtype=float)[:, :2]
    return np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)


class Tracker3D:
    """Tracking by sea-plane centroid distance, one call per frame."""

    def __init__(self, config: Optional[FusionConfig] = None, source: Source = Source.LIDAR_ONLY):
        self.config = config or FusionConfig()
        self.source = Source(source)
        self.tracks: List[Track3D] = []
        self.next_id = 1
        self.last_frame: Optional[int] = None

    def track_by_distance(self, frame_index: int, observations: Sequence[Observation]) -> List[Obstacle3D]:
        cfg = self.config
        if self.last_frame is not None and frame_index <= self.last_frame:
            raise SequencingError(f"frame {frame_index} after frame {self.last_frame}")
        self.last_frame = frame_index

        dist = _distance_matrix([t.last_centroid for t in self.tracks], [o.centroid for o in observations])
        pairs = _greedy_pairs(dist, cfg.track_distance_threshold)
        obs_track: Dict[int, Track3D] = {}
        matched = set()
        for ti, oj in pairs:
            t, o = self.tracks[ti], observations[oj]
            t.last_centroid = np.asarray(o.centroid, dtype=float)
            t.misses = 0
            if o.label is not None:
                t.label = o.label
            obs_track[oj] = t
            matched.add(ti)

        for ti, t in enumerate(self.tracks):
            if ti not in matched:
                t.misses += 1
        self.tracks = [t for t in self.tracks if t.misses < cfg.max_misses_3d]

        for oj, o in enumerate(observations):
            if oj not in obs_track:
                t = Track3D(self.next_id, np.asarray(o.centroid, dtype=float), 0, o.label)
                self.next_id += 1
                self.tracks.append(t)
                obs_track[oj] = t

        return [
            Obstacle3D(obs_track[j].id, o.box, o.label, self.source, np.asarray(o.centroid, dtype=float), frame_index)
            for j, o in enumerate(observations)
        ]

    def track(self, track_id: int) -> Optional[Track3D]:
        for t in self.tracks:
            if t.id == track_id:
                return t
        return None


def track_by_distance(tracker: Tracker3D, frame_index: int, observations) -> List[Obstacle3D]:
    return tracker.track_by_distance(frame_index, observations)


def hybrid_label(
    all_cloud: Sequence[Obstacle3D], camera_fused: Sequence[Obstacle3D], config: Optional[FusionConfig] = None
) -> List[Obstacle3D]:
    """Give camera labels to the nearest all-cloud obstacles within the match distance."""
    cfg = config or FusionConfig()
    dist = _distance_matrix([o.centroid for o in all_cloud], [o.centroid for o in camera_fused])
    pairs = dict(_greedy_pairs(dist, cfg.hybrid_match_distance))
    out = []
    for i, o in enumerate(all_cloud):
        if i in pairs:
            cam = camera_fused[pairs[i]]
            out.append(Obstacle3D(o.track_id, o.box, cam.label, Source.CAMERA_FUSED, o.centroid, o.frame_index))
        else:
            out.append(Obstacle3D(o.track_id, o.box, None, Source.LIDAR_ONLY, o.centroid, o.frame_index))
    return out


# -- per-frame pipeline -------------------------------------------------------


@dataclass
class FrameBundle:
    frame_index: int
    cloud: cl.PointCloud
    detections: List[Detection2D] = field(default_factory=list)
    orientation: Optional[np.ndarray] = None
    timestamps: Dict[str, float] = field(default_factory=dict)


@dataclass
class PipelineOptions:
    """The subset of the pipeline configuration used by :func:`pipeline_step`."""

    accumulation_window: int = 3
    r_min: float = 2.0
    r_max: float = 100.0
    cluster: cl.ClusterParams = field(default_factory=cl.ClusterParams)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    camera_path: bool = True
    lidar_path: bool = True


STAGES = (
    "filter",
    "accumulate",
    "sea_projection",
    "pyramids",
    "extraction",
    "pyramid_clustering",
    "pyramid_tracking",
    "cloud_clustering",
    "cloud_tracking",
    "hybrid",
)


@dataclass
class ObstacleMap:
    frame_index: int
    obstacles: List[Obstacle3D]
    camera_obstacles: List[Obstacle3D]
    timings_ms: Dict[str, float]
    n_points: int = 0


class PipelineState:
    def __init__(self, options: PipelineOptions):
        self.accumulator = cl.CloudAccumulator(options.accumulation_window)
        self.camera_tracker = Tracker3D(options.fusion, Source.CAMERA_FUSED)
        self.lidar_tracker = Tracker3D(options.fusion, Source.LIDAR_ONLY)


class _Clock:
    def __init__(self):
        self.timings: Dict[str, float] = {s: 0.0 for s in STAGES}
        self._t = time.perf_counter()

    def lap(self, stage: str):
        now = time.perf_counter()
        self.timings[stage] += (now - self._t) * 1e3
        self._t = now


def _observation(points_sea, raw_points, cluster: cl.Cluster, label=None) -> Observation:
    box = cl.fit_oriented_box(points_sea, cluster, raw_points=raw_points)
    return Observation(box.center.copy(), box, label)


def pipeline_step(
    bundle: FrameBundle,
    state: PipelineState,
    calib: Optional[CalibrationModel],
    options: PipelineOptions,
) -> ObstacleMap:
    t_start = time.perf_counter()
    clock = _Clock()
    fcfg = options.fusion

    filtered = cl.filter_cloud(bundle.cloud, options.r_min, options.r_max)
    clock.lap("filter")
    merged = state.accumulator.accumulate(filtered)
    clock.lap("accumulate")
    raw = merged.points
    sea = cl.project_to_sea_plane(merged, bundle.orientation).points
    clock.lap("sea_projection")

    camera_obs: List[Observation] = []
    camera_path = options.camera_path and calib is not None and raw.shape[0] > 0
    if camera_path:
        frusta = []
        for det in bundle.detections:
            frusta.append((det, build_frustum(calib, det.box)))
        clock.lap("pyramids")
        members = [(det, extract_frustum_points(raw, fr)) for det, fr in frusta]
        clock.lap("extraction")
        fparams = cl.ClusterParams(
            options.cluster.tolerance, min(fcfg.frustum_min_size, options.cluster.max_size), options.cluster.max_size
        )
        for det, idx in members:
            if idx.size == 0:
                continue
            clusters = cl.euclidean_cluster(sea[idx], fparams)
            chosen = select_obstacle_cluster(clusters, fcfg.selection_strategy, calib.camera_center)
            if chosen is None:
                continue
            global_idx = cl.Cluster(idx[chosen.point_indices], chosen.centroid)
            camera_obs.append(_observation(sea, raw, global_idx, det.class_id))
        clock.lap("pyramid_clustering")
    camera_obstacles: List[Obstacle3D] = []
    if options.camera_path:
        camera_obstacles = state.camera_tracker.track_by_distance(bundle.frame_index, camera_obs)
    clock.lap("pyramid_tracking")

    if options.lidar_path:
        lidar_obs = []
        if raw.shape[0] > 0:
            lidar_obs = [_observation(sea, raw, c) for c in cl.euclidean_cluster(sea, options.cluster)]
        clock.lap("cloud_clustering")
        lidar_obstacles = state.lidar_tracker.track_by_distance(bundle.frame_index, lidar_obs)
        clock.lap("cloud_tracking")
        obstacles = hybrid_label(lidar_obstacles, camera_obstacles, fcfg)
        if fcfg.sticky_labels:
            obstacles = _apply_sticky_labels(obstacles, state.lidar_tracker)
        clock.lap("hybrid")
    else:
        obstacles = list(camera_obstacles)

    timings = clock.timings
    timings["total"] = (time.perf_counter() - t_start) * 1e3
    return ObstacleMap(bundle.frame_index, obstacles, camera_obstacles, timings, int(raw.shape[0]))


def _apply_sticky_labels(obstacles: List[Obstacle3D], tracker: Tracker3D) -> List[Obstacle3D]:
    out = []
    for o in obstacles:
        t = tracker.track(o.track_id)
        if t is None:
            out.append(o)
            continue
        if o.label is not None:
            t.label = o.label
            out.append(o)
        elif t.label is not None:
            out.append(Obstacle3D(o.track_id, o.box, t.label, o.source, o.centroid, o.frame_index))
        else:
            out.append(o)
    return out
