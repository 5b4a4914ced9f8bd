"""Detection and tracking evaluation: IoU matching, 11-point AP, F-score, ID switches."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .tracker2d.association import iou

RECALL_POINTS = np.linspace(0.0, 1.0, 11)


@dataclass(frozen=True)
class Prediction:
    box: Tuple[float, float, float, float]
    class_id: int
    confidence: float
    track_id: Optional[int] = None


@dataclass(frozen=True)
class GroundTruth:
    box: Tuple[float, float, float, float]
    class_id: int
    track_id: Optional[int] = None


@dataclass
class FrameMatch:
    tp: int
    fp: int
    fn: int
    pred_is_tp: List[bool]
    # prediction index -> ground-truth index
    pairs: Dict[int, int] = field(default_factory=dict)


def _check_threshold(iou_threshold: float):
    if not 0 < iou_threshold <= 1:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")


def match_frame(preds: Sequence[Prediction], gts: Sequence[GroundTruth], iou_threshold: float) -> FrameMatch:
    """Greedy matching in descending confidence.

    Each prediction takes the unmatched same-class ground truth with the
    highest IoU, provided that IoU reaches the threshold.
    """
    _check_threshold(iou_threshold)
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    taken = [False] * len(gts)
    flags = [False] * len(preds)
    pairs = {}
    for i in order:
        p = preds[i]
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(gts):
            if taken[j] or g.class_id != p.class_id:
                continue
            v = iou(p.box, g.box)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = j, v
        if best >= 0:
            taken[best] = True
            flags[i] = True
            pairs[i] = best
    tp = sum(flags)
    return FrameMatch(tp, len(preds) - tp, len(gts) - tp, flags, pairs)


def ranked_matches(
    preds_seq: Mapping[int, Sequence[Prediction]],
    gts_seq: Mapping[int, Sequence[GroundTruth]],
    iou_threshold: float,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Confidences and TP flags of every prediction, plus the ground-truth count."""
    confs, flags = [], []
    n_gt = 0
    for frame in sorted(set(preds_seq) | set(gts_seq)):
        preds = list(preds_seq.get(frame, ()))
        gts = list(gts_seq.get(frame, ()))
        n_gt += len(gts)
        m = match_frame(preds, gts, iou_threshold)
        confs.extend(p.confidence for p in preds)
        flags.extend(m.pred_is_tp)
    return np.asarray(confs, dtype=float), np.asarray(flags, dtype=bool), n_gt


def precision_recall_curve(confidences, is_tp, n_gt: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cumulative (recall, precision) over the confidence-ranked list.

    The curve starts at the (recall 0, precision 1) anchor.
    """
    order = np.argsort(-np.asarray(confidences, dtype=float), kind="stable")
    hits = np.asarray(is_tp, dtype=bool)[order]
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / n_gt if n_gt else np.zeros_like(tp, dtype=float)
    precision = tp / np.maximum(tp + fp, 1)
    return np.concatenate([[0.0], recall]), np.concatenate([[1.0], precision])


def interpolated_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    total = 0.0
    for r in RECALL_POINTS:
        above = precision[recall >= r - 1e-12]
        total += above.max() if above.size else 0.0
    return total / len(RECALL_POINTS)


def average_precision_11pt(
    preds_seq: Mapping[int, Sequence[Prediction]],
    gts_seq: Mapping[int, Sequence[GroundTruth]],
    iou_threshold: float,
) -> float:
    """Mean interpolated precision at recall 0, 0.1, ..., 1.0 for one class.

    Zero when nothing is detected correctly.
    """
    confs, flags, n_gt = ranked_matches(preds_seq, gts_seq, iou_threshold)
    if n_gt == 0 or not flags.any():
        return 0.0
    recall, precision = precision_recall_curve(confs, flags, n_gt)
    return interpolated_ap(recall, precision)


def f_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# -- ID switches --------------------------------------------------------------


def count_switches(matched_per_frame: Iterable[Mapping[Hashable, Hashable]]) -> int:
    """Count frames where a ground-truth id is matched to a different predicted id
    than at its previous match. Input: per frame, gt id -> predicted id."""
    last: Dict[Hashable, Hashable] = {}
    switches = 0
    for matched in matched_per_frame:
        for gt_id, pred_id in matched.items():
            if gt_id in last and last[gt_id] != pred_id:
                switches += 1
            last[gt_id] = pred_id
    return switches


def _greedy_by_score(score: np.ndarray, accept: Callable[[float], bool], descending: bool):
    if score.size == 0:
        return []
    flat = np.argsort(-score if descending else score, axis=None, kind="stable")
    used_r, used_c, pairs = set(), set(), []
    for k in flat:
        r, c = np.unravel_index(k, score.shape)
        if not accept(score[r, c]):
            break
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        pairs.append((int(r), int(c)))
    return pairs


def count_id_switches(
    pred_frames: Mapping[int, Sequence[Prediction]],
    gt_frames: Mapping[int, Sequence[GroundTruth]],
    iou_threshold: float,
) -> int:
    """ID switches of 2D tracks; per frame, gts and predictions pair greedily by IoU."""
    _check_threshold(iou_threshold)
    per_frame = []
    for frame in sorted(gt_frames):
        gts = [g for g in gt_frames[frame] if g.track_id is not None]
        preds = [p for p in pred_frames.get(frame, ()) if p.track_id is not None]
        score = np.array([[iou(g.box, p.box) for p in preds] for g in gts]).reshape(len(gts), len(preds))
        pairs = _greedy_by_score(score, lambda v: v >= iou_threshold, descending=True)
        per_frame.append({gts[r].track_id: preds[c].track_id for r, c in pairs})
    return count_switches(per_frame)


def count_id_switches_3d(
    pred_frames: Mapping[int, Sequence[Tuple[int, Sequence[float]]]],
    gt_frames: Mapping[int, Sequence[Tuple[int, Sequence[float]]]],
    max_distance: float,
) -> int:
    """ID switches of 3D tracks; entries are (id, centroid) paired greedily by distance."""
    per_frame = []
    for frame in sorted(gt_frames):
        gts = list(gt_frames[frame])
        preds = list(pred_frames.get(frame, ()))
        if gts and preds:
            G = np.array([np.asarray(c, dtype=float)[:2] for _, c in gts])
            P = np.array([np.asarray(c, dtype=float)[:2] for _, c in preds])
            dist = np.linalg.norm(G[:, None] - P[None], axis=2)
        else:
            dist = np.zeros((len(gts), len(preds)))
        pairs = _greedy_by_score(dist, lambda v: v <= max_distance, descending=False)
        per_frame.append({gts[r][0]: preds[c][0] for r, c in pairs})
    return count_switches(per_frame)


# -- sequence report ----------------------------------------------------------


@dataclass
class EvalReport:
    ap: Dict[int, float]
    mAP: float
    precision: float
    recall: float
    f_score: float
    tp: int
    fp: int
    fn: int
    id_switches: int
    iou_threshold: float
    class_agnostic: bool = False
    frames_evaluated: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ap"] = {str(k): v for k, v in sorted(self.ap.items())}
        return d


AGNOSTIC_CLASS = 0


def _cast(frames, agnostic: bool, cls):
    if not agnostic:
        return frames
    return {
        f: [
            cls(**{**asdict(o), "class_id": AGNOSTIC_CLASS})
            for o in objs
        ]
        for f, objs in frames.items()
    }


def evaluate(
    pred_frames: Mapping[int, Sequence[Prediction]],
    gt_frames: Mapping[int, Sequence[GroundTruth]],
    iou_threshold: float,
    class_agnostic: bool = False,
) -> EvalReport:
    """Sequence-level report. The IoU threshold is required on purpose:
    published numbers use different thresholds per dataset."""
    _check_threshold(iou_threshold)
    preds = _cast(pred_frames, class_agnostic, Prediction)
    gts = _cast(gt_frames, class_agnostic, GroundTruth)

    tp = fp = fn = 0
    for frame in sorted(set(preds) | set(gts)):
        m = match_frame(list(preds.get(frame, ())), list(gts.get(frame, ())), iou_threshold)
        tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn

    classes = sorted({g.class_id for objs in gts.values() for g in objs})
    ap = {}
    for c in classes:
        ap[c] = average_precision_11pt(
            {f: [p for p in objs if p.class_id == c] for f, objs in preds.items()},
            {f: [g for g in objs if g.class_id == c] for f, objs in gts.items()},
            iou_threshold,
        )
    mean_ap = float(np.mean(list(ap.values()))) if ap else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return EvalReport(
        ap=ap,
        mAP=mean_ap,
        precision=precision,
        recall=recall,
        f_score=f_score(precision, recall),
        tp=tp,
        fp=fp,
        fn=fn,
        id_switches=count_id_switches(preds, gts, iou_threshold),
        iou_threshold=iou_threshold,
        class_agnostic=class_agnostic,
        frames_evaluated=len(gts),
    )
