"""Dataset ingestion, synchronization and the run / profile / project / evaluate
workflows behind the command line."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import io
from .cloud import ClusterParams, PointCloud
from .errors import ConfigError, LookupFrameError, SeafusionError, SequencingError
from .fusion3d import (
    STAGES,
    FrameBundle,
    FusionConfig,
    ObstacleMap,
    PipelineOptions,
    PipelineState,
    pipeline_step,
)
from .geometry import BBox2D, CalibrationModel, format_calibration, load_calibration, project_points
from .metrics import EvalReport, evaluate, precision_recall_curve, ranked_matches
from .tracker2d.tracker import Detection2D, Tracker2D, TrackerConfig, class_name

logger = logging.getLogger(__name__)

MAX_SKIPPED_FRACTION = 0.10


@dataclass
class PipelineConfig:
    accumulation_window: int = 3
    r_min: float = 2.0
    r_max: float = 100.0
    cluster_tolerance: float = 3.0
    cluster_min_size: int = 30
    cluster_max_size: int = 10000
    track_distance_threshold: float = 5.0
    max_misses_3d: int = 10
    selection_strategy: str = "largest"
    hybrid_match_distance: float = 3.0
    frustum_min_size: int = 5
    sticky_labels: bool = True
    confirm_frames: int = 3
    max_misses: int = 10
    add_confidence: float = 0.5
    kalman_warmup: int = 10
    descriptor_delete_threshold: float = 1.5
    use_appearance: bool = False
    association_gate: float = 2.0
    penalty_mode: str = "boosted"
    smooth_detections: bool = False
    sync_slack: float = 0.05
    frame_rate: float = 10.0
    camera_path: bool = True
    lidar_path: bool = True

    def options(self) -> PipelineOptions:
        return PipelineOptions(
            accumulation_window=self.accumulation_window,
            r_min=self.r_min,
            r_max=self.r_max,
            cluster=ClusterParams(self.cluster_tolerance, self.cluster_min_size, self.cluster_max_size),
            fusion=FusionConfig(
                track_distance_threshold=self.track_distance_threshold,
                max_misses_3d=self.max_misses_3d,
                selection_strategy=self.selection_strategy,
                hybrid_match_distance=self.hybrid_match_distance,
                frustum_min_size=self.frustum_min_size,
                sticky_labels=self.sticky_labels,
            ),
            camera_path=self.camera_path,
            lidar_path=self.lidar_path,
        )

    def tracker_config(self) -> TrackerConfig:
        return TrackerConfig(
            confirm_frames=self.confirm_frames,
            max_misses=self.max_misses,
            add_confidence=self.add_confidence,
            kalman_warmup=self.kalman_warmup,
            descriptor_delete_threshold=self.descriptor_delete_threshold,
            use_appearance=self.use_appearance,
            gate=self.association_gate,
            penalty_mode=self.penalty_mode,
        )

    def validate(self) -> "PipelineConfig":
        """Build every module config so bad values fail before any data is read."""
        try:
            if int(self.accumulation_window) < 1:
                raise ValueError("accumulation_window must be >= 1")
            if not 0 <= self.r_min < self.r_max:
                raise ValueError("need 0 <= r_min < r_max")
            if self.sync_slack < 0:
                raise ValueError("sync_slack must be non-negative")
            if not self.frame_rate > 0:
                raise ValueError("frame_rate must be positive")
            self.options()
            self.tracker_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


def config_from_dict(data: Optional[dict]) -> PipelineConfig:
    data = dict(data or {})
    known = {f.name: f for f in fields(PipelineConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        default = known[key].default
        try:
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise ValueError
                kwargs[key] = value
            elif isinstance(default, int):
                if isinstance(value, bool) or float(value) != int(value):
                    raise ValueError
                kwargs[key] = int(value)
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad value for {key}: {value!r}") from None
    return PipelineConfig(**kwargs).validate()


def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        return PipelineConfig().validate()
    import yaml

    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not key: value text: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a key: value mapping")
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig) -> str:
    return "".join(f"{k}: {json.dumps(v)}\n" for k, v in asdict(cfg).items())


# -- synchronization ----------------------------------------------------------


@dataclass
class SyncedFrame:
    frame_index: int
    timestamp: float
    cloud_ref: object
    detections: List[Detection2D] = field(default_factory=list)
    orientation: Optional[np.ndarray] = None
    timestamps: Dict[str, float] = field(default_factory=dict)


def _check_ordered(times: Sequence[float], name: str):
    for a, b in zip(times, times[1:]):
        if b < a:
            raise SequencingError(f"{name} stream is not time-ordered ({b} after {a})")


def _nearest(times: np.ndarray, t: float, slack: float) -> int:
    if times.size == 0:
        return -1
    i = int(np.searchsorted(times, t))
    best, best_dt = -1, None
    for j in (i - 1, i):
        if 0 <= j < times.size:
            dt = abs(times[j] - t)
            if dt <= slack + 1e-12 and (best_dt is None or dt < best_dt):
                best, best_dt = j, dt
    return best


def synchronize(
    clouds: Sequence[Tuple[int, float, object]],
    detection_sets: Sequence[Tuple[float, int, List[Detection2D]]] = (),
    orientations: Sequence[Tuple[float, np.ndarray]] = (),
    sync_slack: float = 0.05,
) -> List[SyncedFrame]:
    """One frame per cloud, with the nearest detection set and orientation within the slack."""
    _check_ordered([c[1] for c in clouds], "cloud")
    _check_ordered([d[0] for d in detection_sets], "detection")
    _check_ordered([o[0] for o in orientations], "orientation")
    det_t = np.array([d[0] for d in detection_sets], dtype=float)
    ori_t = np.array([o[0] for o in orientations], dtype=float)
    out = []
    for frame_index, ts, ref in clouds:
        stamps = {"cloud": ts}
        dets: List[Detection2D] = []
        j = _nearest(det_t, ts, sync_slack)
        if j >= 0:
            dets = list(detection_sets[j][2])
            stamps["detections"] = float(det_t[j])
        q = None
        j = _nearest(ori_t, ts, sync_slack)
        if j >= 0:
            q = orientations[j][1]
            stamps["orientation"] = float(ori_t[j])
        out.append(SyncedFrame(frame_index, ts, ref, dets, q, stamps))
    return out


# -- datasets -----------------------------------------------------------------


@dataclass
class Dataset:
    root: str
    calibration: Optional[CalibrationModel]
    frames: List[SyncedFrame]
    has_detections: bool

    def bundle(self, frame: SyncedFrame) -> FrameBundle:
        cloud = io.read_cloud(frame.cloud_ref, frame.timestamp)
        return FrameBundle(frame.frame_index, cloud, frame.detections, frame.orientation, frame.timestamps)

    def find(self, frame_index: int) -> SyncedFrame:
        for f in self.frames:
            if f.frame_index == frame_index:
                return f
        raise LookupFrameError(f"frame {frame_index} not in dataset {self.root}")


def open_dataset(root: str, sync_slack: float = 0.05, require_calibration: bool = True) -> Dataset:
    if not os.path.isdir(root):
        raise ConfigError(f"dataset directory {root} does not exist")
    calib_path = os.path.join(root, io.CALIBRATION)
    calib = None
    if os.path.exists(calib_path):
        calib = load_calibration(calib_path)
    elif require_calibration:
        raise ConfigError(f"missing calibration file {calib_path}")
    manifest_path = os.path.join(root, io.MANIFEST)
    if not os.path.exists(manifest_path):
        raise ConfigError(f"missing manifest {manifest_path}")
    manifest = io.read_manifest(manifest_path)

    det_path = os.path.join(root, io.DETECTIONS)
    det_sets = []
    has_det = os.path.exists(det_path)
    if has_det:
        records, frames = io.read_detection_records(det_path, allow_track_id=True)
        det_sets = io.detections_by_frame(records, frames)
    ori_path = os.path.join(root, io.ORIENTATION)
    orientations = io.read_orientation(ori_path) if os.path.exists(ori_path) else []

    frames = synchronize(
        [(e.frame_index, e.timestamp, e.cloud_path) for e in manifest], det_sets, orientations, sync_slack
    )
    return Dataset(root, calib, frames, has_det)


def write_dataset(scenario, root: str):
    """Write a simulated scenario in the dataset format."""
    os.makedirs(os.path.join(root, io.CLOUD_DIR), exist_ok=True)
    with open(os.path.join(root, io.CALIBRATION), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_calibration(scenario.calibration))
    entries, det_frames, gt_frames, gt3d, orient = [], [], [], [], []
    for bundle, truth in zip(scenario.frames, scenario.truth):
        cloud_path = os.path.join(root, io.CLOUD_DIR, f"{bundle.frame_index:06d}.txt")
        io.write_cloud(cloud_path, bundle.cloud)
        entries.append(io.ManifestEntry(bundle.frame_index, bundle.cloud.timestamp, cloud_path))
        det_frames.append(
            (
                bundle.frame_index,
                bundle.cloud.timestamp,
                [
                    io.DetectionRecord(d.frame_index, d.timestamp, d.class_id, d.confidence, d.box.as_tuple())
                    for d in bundle.detections
                ],
            )
        )
        gt_recs = []
        for b in truth.boats:
            gt3d.append(io.Truth3DRecord(truth.frame_index, b.gt_track_id, b.class_id, b.box3d, b.in_view))
            if b.in_view:
                w, h = scenario.calibration.image_width, scenario.calibration.image_height
                vis = b.box2d
                box = (max(vis.x_min, 0.0), max(vis.y_min, 0.0), min(vis.x_max, float(w)), min(vis.y_max, float(h)))
                gt_recs.append(io.DetectionRecord(truth.frame_index, truth.timestamp, b.class_id, 1.0, box, b.gt_track_id))
        gt_frames.append((truth.frame_index, truth.timestamp, gt_recs))
        if bundle.orientation is not None:
            orient.append((bundle.cloud.timestamp, bundle.orientation))
    io.write_manifest(os.path.join(root, io.MANIFEST), entries, relative_to=root)
    io.write_detection_records(os.path.join(root, io.DETECTIONS), det_frames)
    io.write_detection_records(os.path.join(root, io.GROUND_TRUTH), gt_frames)
    io.write_ground_truth_3d(os.path.join(root, io.GROUND_TRUTH_3D), gt3d)
    if orient:
        io.write_orientation(os.path.join(root, io.ORIENTATION), orient)


# -- run ----------------------------------------------------------------------


@dataclass
class RunResult:
    maps: List[ObstacleMap]
    skipped: List[int]
    n_frames: int

    @property
    def skipped_fraction(self) -> float:
        return len(self.skipped) / self.n_frames if self.n_frames else 0.0

    @property
    def ok(self) -> bool:
        return self.skipped_fraction <= MAX_SKIPPED_FRACTION


def timing_row(m: ObstacleMap) -> dict:
    row = {"frame_index": m.frame_index, "n_points": m.n_points}
    row.update({s: m.timings_ms.get(s, 0.0) for s in STAGES})
    row["total"] = m.timings_ms["total"]
    return row


def _smoothed(tracker: Tracker2D, frame: SyncedFrame) -> List[Detection2D]:
    dets = [
        Detection2D(d.box, d.class_id, d.confidence, frame.frame_index, d.timestamp) for d in frame.detections
    ]
    out = []
    for t in tracker.step(frame.frame_index, dets):
        try:
            box = BBox2D(*t.box)
        except ValueError:
            continue
        out.append(Detection2D(box, t.class_id, t.confidence, frame.frame_index, frame.timestamp))
    return out


def process_dataset(dataset: Dataset, config: PipelineConfig) -> RunResult:
    options = config.options()
    if options.camera_path and not dataset.has_detections:
        logger.warning("no %s in %s: running the lidar-only path", io.DETECTIONS, dataset.root)
        options.camera_path = False
    state = PipelineState(options)
    smoother = Tracker2D(config.tracker_config()) if config.smooth_detections else None
    maps, skipped = [], []
    for frame in dataset.frames:
        try:
            bundle = dataset.bundle(frame)
            if smoother is not None:
                bundle.detections = _smoothed(smoother, frame)
            maps.append(pipeline_step(bundle, state, dataset.calibration, options))
        except (SeafusionError, ValueError, OSError) as exc:
            logger.error("frame %d skipped: %s", frame.frame_index, exc)
            skipped.append(frame.frame_index)
    return RunResult(maps, skipped, len(dataset.frames))


def run_pipeline(dataset_dir: str, config: PipelineConfig, output_dir: str) -> RunResult:
    config.validate()
    dataset = open_dataset(dataset_dir, config.sync_slack)
    result = process_dataset(dataset, config)
    os.makedirs(output_dir, exist_ok=True)
    with open(os.path.join(output_dir, "obstacles.txt"), "w", encoding="utf-8", newline="\n") as fh:
        for m in result.maps:
            fh.write(io.format_obstacle_map(m))
    io.write_timing(os.path.join(output_dir, "timing.csv"), [timing_row(m) for m in result.maps])
    if not result.ok:
        logger.error("%d of %d frames skipped", len(result.skipped), result.n_frames)
    return result


# -- profile ------------------------------------------------------------------


@dataclass
class ProfileSummary:
    rows: List[dict]
    stats: Dict[str, Tuple[float, float]]  # stage -> (median, p95) in ms
    budget_ms: float
    violations: int


def summarize_timing(rows: Sequence[dict], frame_rate: float) -> ProfileSummary:
    budget = 1000.0 / frame_rate
    stats = {}
    for s in STAGES + ("total",):
        vals = np.array([r[s] for r in rows], dtype=float)
        stats[s] = (float(np.median(vals)), float(np.percentile(vals, 95))) if vals.size else (0.0, 0.0)
    violations = sum(1 for r in rows if r["total"] > budget)
    return ProfileSummary(list(rows), stats, budget, violations)


def profile(dataset_dir: str, config: PipelineConfig, repetitions: int = 3) -> ProfileSummary:
    config.validate()
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    dataset = open_dataset(dataset_dir, config.sync_slack)
    rows = []
    for rep in range(repetitions):
        result = process_dataset(dataset, config)
        for m in result.maps:
            row = timing_row(m)
            row["repetition"] = rep
            rows.append(row)
    return summarize_timing(rows, config.frame_rate)


def write_profile(summary: ProfileSummary, output_dir: str):
    os.makedirs(output_dir, exist_ok=True)
    io.write_timing(os.path.join(output_dir, "profile_rows.csv"), summary.rows)
    with open(os.path.join(output_dir, "profile_summary.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("stage,median_ms,p95_ms\n")
        for stage, (med, p95) in summary.stats.items():
            fh.write(f"{stage},{med:.3f},{p95:.3f}\n")
        fh.write(f"# budget_ms={summary.budget_ms:.3f} violations={summary.violations} rows={len(summary.rows)}\n")


# -- projection overlay -------------------------------------------------------


def project_debug(dataset_dir: str, frame_index: int, sync_slack: float = 0.05) -> Tuple[np.ndarray, CalibrationModel]:
    """(u, v, range) for every point of the frame's cloud that lands inside the image."""
    dataset = open_dataset(dataset_dir, sync_slack)
    frame = dataset.find(frame_index)
    cloud = io.read_cloud(frame.cloud_ref, frame.timestamp)
    return overlay_points(dataset.calibration, cloud.points), dataset.calibration


def overlay_points(calib: CalibrationModel, points: np.ndarray) -> np.ndarray:
    uv, front = project_points(calib, points)
    inside = front.copy()
    inside[front] = (
        (uv[front, 0] >= 0)
        & (uv[front, 0] < calib.image_width)
        & (uv[front, 1] >= 0)
        & (uv[front, 1] < calib.image_height)
    )
    rng = np.linalg.norm(points[inside], axis=1)
    return np.column_stack([uv[inside], rng]) if inside.any() else np.zeros((0, 3))


def write_overlay(path: str, overlay: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# u v range\n")
        for u, v, r in overlay:
            fh.write(f"{io.fmt(u)} {io.fmt(v)} {io.fmt(r)}\n")


# -- evaluate -----------------------------------------------------------------


def _eval_frames(pred_path: str, gt_path: str, iou_threshold: float):
    if not 0 < iou_threshold <= 1:
        raise ConfigError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    pred_recs, pred_frames = io.read_detection_records(pred_path)
    gt_recs, gt_frames = io.read_detection_records(gt_path)
    preds = io.predictions_by_frame(pred_recs, pred_frames)
    gts = io.ground_truth_by_frame(gt_recs, gt_frames)
    common = sorted(set(preds) & set(gts))
    if len(common) < len(gts):
        logger.warning(
            "predictions cover %d of %d ground-truth frames; evaluating the intersection", len(common), len(gts)
        )
    return {f: preds[f] for f in common}, {f: gts[f] for f in common}


def evaluate_files(pred_path: str, gt_path: str, iou_threshold: float, class_agnostic: bool = False) -> EvalReport:
    preds, gts = _eval_frames(pred_path, gt_path, iou_threshold)
    return evaluate(preds, gts, iou_threshold, class_agnostic)


def pr_curves(
    pred_path: str, gt_path: str, iou_threshold: float, class_agnostic: bool = False
) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Per-class (recall, precision) curves, keyed by class name."""
    preds, gts = _eval_frames(pred_path, gt_path, iou_threshold)
    classes = {o.class_id for objs in gts.values() for o in objs}
    if class_agnostic:
        classes = {None} if classes else set()
    curves = {}
    for cls_id in sorted(classes, key=lambda c: -1 if c is None else c):
        keep = (lambda o: True) if cls_id is None else (lambda o, c=cls_id: o.class_id == c)
        p = {f: [replace(o, class_id=0) for o in objs if keep(o)] for f, objs in preds.items()}
        g = {f: [replace(o, class_id=0) for o in objs if keep(o)] for f, objs in gts.items()}
        confs, flags, n_gt = ranked_matches(p, g, iou_threshold)
        curves["all classes" if cls_id is None else class_name(cls_id)] = precision_recall_curve(confs, flags, n_gt)
    return curves


def format_report(report: EvalReport) -> str:
    lines = []
    for cls_id, ap in sorted(report.ap.items()):
        lines.append(f"ap_class_{cls_id}: {ap:.6f}")
    for key in ("mAP", "precision", "recall", "f_score"):
        lines.append(f"{key}: {getattr(report, key):.6f}")
    for key in ("tp", "fp", "fn", "id_switches", "frames_evaluated"):
        lines.append(f"{key}: {getattr(report, key)}")
    lines.append(f"iou_threshold: {report.iou_threshold:.6f}")
    lines.append(f"class_agnostic: {str(report.class_agnostic).lower()}")
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, output_dir: str):
    os.makedirs(output_dir, exist_ok=True)
    with open(os.path.join(output_dir, "report.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(report))
    with open(os.path.join(output_dir, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
