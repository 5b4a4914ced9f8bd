"""Plain-text dataset and report formats.

Dataset directory layout::

    calibration.txt       width height, then 3 rows of the projection matrix
    manifest.txt          frame_index timestamp cloud_path
    clouds/NNNNNN.txt     x y z per line
    detections.txt        frame_index timestamp class_id confidence x_min y_min x_max y_max
    orientation.txt       timestamp qx qy qz qw              (optional)
    ground_truth.txt      detection record + gt_track_id      (optional)
    ground_truth_3d.txt   frame_index gt_track_id class_id cx cy yaw length width in_view

A detection-style line holding only ``frame_index timestamp`` declares a
frame with no records, so empty frames survive a round trip.
"""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .cloud import OrientedBox, PointCloud
from .errors import ParseError
from .fusion3d import STAGES, ObstacleMap
from .geometry import BBox2D
from .metrics import GroundTruth, Prediction
from .tracker2d.tracker import Detection2D, class_name

CALIBRATION = "calibration.txt"
MANIFEST = "manifest.txt"
DETECTIONS = "detections.txt"
ORIENTATION = "orientation.txt"
GROUND_TRUTH = "ground_truth.txt"
GROUND_TRUTH_3D = "ground_truth_3d.txt"
CLOUD_DIR = "clouds"


def fmt(v: float) -> str:
    """Locale-independent fixed decimal."""
    s = f"{float(v):.6f}"
    return "0.000000" if s == "-0.000000" else s


def _records(path: str) -> Iterable[Tuple[int, List[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def _num(tok: str, kind, lineno: int, path: str):
    try:
        v = kind(tok)
    except ValueError:
        raise ParseError(f"bad number {tok!r}", lineno, path) from None
    if kind is float and not np.isfinite(v):
        raise ParseError(f"non-finite number {tok!r}", lineno, path)
    return v


# -- manifest / clouds --------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    frame_index: int
    timestamp: float
    cloud_path: str


def read_manifest(path: str) -> List[ManifestEntry]:
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for lineno, f in _records(path):
        if len(f) != 3:
            raise ParseError(f"expected 'frame_index timestamp cloud_path', got {len(f)} fields", lineno, path)
        cloud = f[2] if os.path.isabs(f[2]) else os.path.join(base, f[2])
        out.append(ManifestEntry(_num(f[0], int, lineno, path), _num(f[1], float, lineno, path), cloud))
    return out


def write_manifest(path: str, entries: Sequence[ManifestEntry], relative_to: Optional[str] = None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# frame_index timestamp cloud_path\n")
        for e in entries:
            p = os.path.relpath(e.cloud_path, relative_to) if relative_to else e.cloud_path
            fh.write(f"{e.frame_index} {fmt(e.timestamp)} {p}\n")


def read_cloud(path: str, timestamp: float = 0.0) -> PointCloud:
    rows = []
    for lineno, f in _records(path):
        if len(f) != 3:
            raise ParseError(f"expected 'x y z', got {len(f)} fields", lineno, path)
        rows.append([_num(t, float, lineno, path) for t in f])
    return PointCloud(timestamp, np.array(rows, dtype=float).reshape(-1, 3))


def write_cloud(path: str, cloud: PointCloud):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x, y, z in cloud.points:
            fh.write(f"{fmt(x)} {fmt(y)} {fmt(z)}\n")


# -- detections / predictions / ground truth ----------------------------------


@dataclass
class DetectionRecord:
    frame_index: int
    timestamp: float
    class_id: int
    confidence: float
    box: Tuple[float, float, float, float]
    track_id: Optional[int] = None


def read_detection_records(path: str, allow_track_id: bool = True) -> Tuple[List[DetectionRecord], Dict[int, float]]:
    """Records plus every declared frame (frame_index -> timestamp)."""
    records, frames = [], {}
    for lineno, f in _records(path):
        if len(f) == 2:
            frames[_num(f[0], int, lineno, path)] = _num(f[1], float, lineno, path)
            continue
        if len(f) not in ((8, 9) if allow_track_id else (8,)):
            raise ParseError(f"expected 8{' or 9' if allow_track_id else ''} fields, got {len(f)}", lineno, path)
        frame = _num(f[0], int, lineno, path)
        ts = _num(f[1], float, lineno, path)
        box = tuple(_num(t, float, lineno, path) for t in f[4:8])
        if not (box[0] < box[2] and box[1] < box[3]):
            raise ParseError(f"invalid box {box}", lineno, path)
        conf = _num(f[3], float, lineno, path)
        if not 0 <= conf <= 1:
            raise ParseError(f"confidence {conf} outside [0, 1]", lineno, path)
        track = _num(f[8], int, lineno, path) if len(f) == 9 else None
        records.append(DetectionRecord(frame, ts, _num(f[2], int, lineno, path), conf, box, track))
        frames.setdefault(frame, ts)
    return records, frames


def write_detection_records(path: str, frames: Sequence[Tuple[int, float, Sequence[DetectionRecord]]]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# frame_index timestamp class_id confidence x_min y_min x_max y_max [track_id]\n")
        for frame, ts, recs in frames:
            if not recs:
                fh.write(f"{frame} {fmt(ts)}\n")
            for r in recs:
                line = f"{frame} {fmt(ts)} {r.class_id} {fmt(r.confidence)} " + " ".join(fmt(v) for v in r.box)
                if r.track_id is not None:
                    line += f" {r.track_id}"
                fh.write(line + "\n")


def detections_by_frame(records: Sequence[DetectionRecord], frames: Dict[int, float]):
    """Detection sets in file order: list of (timestamp, frame_index, [Detection2D])."""
    grouped = defaultdict(list)
    for r in records:
        grouped[r.frame_index].append(Detection2D(BBox2D(*r.box), r.class_id, r.confidence, r.frame_index, r.timestamp))
    return [(ts, f, grouped.get(f, [])) for f, ts in frames.items()]


def predictions_by_frame(records, frames) -> Dict[int, List[Prediction]]:
    out: Dict[int, List[Prediction]] = {f: [] for f in frames}
    for r in records:
        out[r.frame_index].append(Prediction(r.box, r.class_id, r.confidence, r.track_id))
    return out


def ground_truth_by_frame(records, frames) -> Dict[int, List[GroundTruth]]:
    out: Dict[int, List[GroundTruth]] = {f: [] for f in frames}
    for r in records:
        out[r.frame_index].append(GroundTruth(r.box, r.class_id, r.track_id))
    return out


# -- orientation --------------------------------------------------------------


def read_orientation(path: str) -> List[Tuple[float, np.ndarray]]:
    out = []
    for lineno, f in _records(path):
        if len(f) != 5:
            raise ParseError(f"expected 'timestamp qx qy qz qw', got {len(f)} fields", lineno, path)
        vals = [_num(t, float, lineno, path) for t in f]
        out.append((vals[0], np.array(vals[1:])))
    return out


def write_orientation(path: str, rows: Sequence[Tuple[float, np.ndarray]]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# timestamp qx qy qz qw\n")
        for ts, q in rows:
            fh.write(f"{fmt(ts)} " + " ".join(f"{float(v):.9f}" for v in q) + "\n")


# -- 3D ground truth ----------------------------------------------------------


@dataclass
class Truth3DRecord:
    frame_index: int
    gt_track_id: int
    class_id: int
    box: OrientedBox
    in_view: bool


def read_ground_truth_3d(path: str) -> List[Truth3DRecord]:
    out = []
    for lineno, f in _records(path):
        if len(f) != 9:
            raise ParseError(f"expected 9 fields, got {len(f)}", lineno, path)
        cx, cy, yaw, length, width = (_num(t, float, lineno, path) for t in f[3:8])
        box = OrientedBox(np.array([cx, cy, 0.0]), yaw, length, width)
        out.append(
            Truth3DRecord(
                _num(f[0], int, lineno, path),
                _num(f[1], int, lineno, path),
                _num(f[2], int, lineno, path),
                box,
                bool(_num(f[8], int, lineno, path)),
            )
        )
    return out


def write_ground_truth_3d(path: str, rows: Sequence[Truth3DRecord]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# frame_index gt_track_id class_id cx cy yaw length width in_view\n")
        for r in rows:
            b = r.box
            fh.write(
                f"{r.frame_index} {r.gt_track_id} {r.class_id} {fmt(b.center[0])} {fmt(b.center[1])} "
                f"{fmt(b.yaw)} {fmt(b.length)} {fmt(b.width)} {int(r.in_view)}\n"
            )


# -- obstacle maps ------------------------------------------------------------


def format_obstacle_map(m: ObstacleMap) -> str:
    """``frame <index> <count>`` then one line per obstacle:
    track_id source label cx cy yaw length width."""
    lines = [f"frame {m.frame_index} {len(m.obstacles)}"]
    for o in m.obstacles:
        b = o.box
        lines.append(
            f"{o.track_id} {o.source.value} {class_name(o.label)} {fmt(b.center[0])} {fmt(b.center[1])} "
            f"{fmt(b.yaw)} {fmt(b.length)} {fmt(b.width)}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class ObstacleRecord:
    track_id: int
    source: str
    label: str
    cx: float
    cy: float
    yaw: float
    length: float
    width: float


def read_obstacle_maps(path: str) -> Dict[int, List[ObstacleRecord]]:
    out: Dict[int, List[ObstacleRecord]] = {}
    current, remaining = None, 0
    for lineno, f in _records(path):
        if f[0] == "frame":
            if remaining:
                raise ParseError(f"frame {current} is missing {remaining} obstacle lines", lineno, path)
            if len(f) != 3:
                raise ParseError("expected 'frame <index> <count>'", lineno, path)
            current, remaining = _num(f[1], int, lineno, path), _num(f[2], int, lineno, path)
            out[current] = []
            continue
        if current is None or remaining == 0:
            raise ParseError("obstacle line outside a frame block", lineno, path)
        if len(f) != 8:
            raise ParseError(f"expected 8 obstacle fields, got {len(f)}", lineno, path)
        out[current].append(
            ObstacleRecord(_num(f[0], int, lineno, path), f[1], f[2], *(_num(t, float, lineno, path) for t in f[3:]))
        )
        remaining -= 1
    if remaining:
        raise ParseError(f"frame {current} is missing {remaining} obstacle lines", source=path)
    return out


# -- timing -------------------------------------------------------------------

TIMING_COLUMNS = ("frame_index", "n_points") + STAGES + ("total",)


def write_timing(path: str, rows: Sequence[dict]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_COLUMNS)
        for r in rows:
            w.writerow([r["frame_index"], r["n_points"]] + [f"{r[s]:.3f}" for s in STAGES + ("total",)])


def read_timing(path: str) -> List[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: (int(v) if k in ("frame_index", "n_points") else float(v)) for k, v in r.items()})
        return rows
