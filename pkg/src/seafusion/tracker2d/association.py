"""Track/detection association: box distance, matching cost, optimal assignment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import InvalidCostError
from ..geometry import BBox2D
from .hog import descriptor_distance

DEFAULT_GATE = 2.0
PENALTY_BOOSTED = "boosted"
PENALTY_LITERAL = "literal"


def _coords(box):
    if isinstance(box, BBox2D):
        return box.as_tuple()
    return tuple(float(v) for v in box)


def iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = _coords(a)
    bx0, by0, bx1, by1 = _coords(b)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def jaccard_distance(a, b) -> float:
    """(|A u B| - |A n B|) / |A u B|, i.e. 1 - IoU."""
    return 1.0 - iou(a, b)


def confidence_penalty(confidence: float, mode: str = PENALTY_BOOSTED) -> float:
    """Cost multiplier for a detection.

    ``boosted``: 1 above 0.5 confidence, 1 + (1 - c) below, so weak
    detections cost more. ``literal``: (1 - c) below 0.5.
    """
    if confidence >= 0.5:
        return 1.0
    if mode == PENALTY_BOOSTED:
        return 1.0 + (1.0 - confidence)
    if mode == PENALTY_LITERAL:
        return 1.0 - confidence
    raise ValueError(f"unknown penalty mode {mode!r}")


def matching_cost(
    track_box,
    det_box,
    confidence: float,
    track_descriptor=None,
    det_descriptor=None,
    use_appearance: bool = True,
    penalty_mode: str = PENALTY_BOOSTED,
) -> float:
    desc = 0.0
    if use_appearance and track_descriptor is not None and det_descriptor is not None:
        desc = descriptor_distance(track_descriptor, det_descriptor)
    return confidence_penalty(confidence, penalty_mode) * (jaccard_distance(track_box, det_box) + desc)


@dataclass
class Assignment:
    matches: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_rows: List[int] = field(default_factory=list)
    unmatched_cols: List[int] = field(default_factory=list)

    def total_cost(self, cost_matrix) -> float:
        c = np.asarray(cost_matrix, dtype=float)
        return float(sum(c[r, k] for r, k in self.matches))


def associate(cost_matrix, gate: Optional[float] = DEFAULT_GATE) -> Assignment:
    """Minimum-cost one-to-one assignment of rows (tracks) to columns (detections).

    Pairs costing more than ``gate`` are demoted to unmatched after the
    optimal assignment is found. ``gate=None`` disables gating.
    """
    cost = np.asarray(cost_matrix, dtype=float)
    if cost.ndim != 2:
        if cost.size == 0:
            cost = cost.reshape(0, 0)
        else:
            raise InvalidCostError(f"cost matrix must be 2D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InvalidCostError("cost matrix contains non-finite entries")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return Assignment([], list(range(n_rows)), list(range(n_cols)))

    rows, cols = linear_sum_assignment(cost)
    matches = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        if gate is None or cost[r, c] <= gate:
            matches.append((r, c))
    matched_r = {r for r, _ in matches}
    matched_c = {c for _, c in matches}
    return Assignment(
        matches,
        [r for r in range(n_rows) if r not in matched_r],
        [c for c in range(n_cols) if c not in matched_c],
    )
