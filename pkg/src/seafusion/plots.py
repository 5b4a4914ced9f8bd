"""Report figures written next to the delimited outputs."""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fusion3d import STAGES, ObstacleMap, Source  # noqa: E402
from .tracker2d.tracker import class_name  # noqa: E402

FIG_WIDTH = 7.0
GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _figure(scale=1.0, aspect=GOLDEN):
    w = FIG_WIDTH * scale
    return plt.subplots(figsize=(w, w * aspect))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_timing(rows: Sequence[dict], path: str, budget_ms: Optional[float] = None):
    """Per-stage and total execution time against accumulated cloud size."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        n = np.array([r["n_points"] for r in rows], dtype=float)
        order = np.argsort(n, kind="stable")
        for stage in STAGES:
            vals = np.array([r[stage] for r in rows])[order]
            if np.any(vals > 0):
                ax.plot(n[order], vals, ".", ms=3, label=stage)
        ax.plot(n[order], np.array([r["total"] for r in rows])[order], "k.", ms=4, label="total")
        if budget_ms is not None:
            ax.axhline(budget_ms, color="r", lw=1, ls="--", label=f"budget {budget_ms:g} ms")
        ax.set_xlabel("accumulated cloud size [points]")
        ax.set_ylabel("time [ms]")
        ax.legend(ncol=3, frameon=False)
        return _save(fig, path)


def plot_pr_curve(curves: Dict[str, Tuple[np.ndarray, np.ndarray]], path: str):
    with plt.rc_context(STYLE):
        fig, ax = _figure(0.7, 1.0)
        for name, (recall, precision) in curves.items():
            ax.step(recall, precision, where="post", label=name)
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        if curves:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_projection(overlay: np.ndarray, width: int, height: int, path: str):
    """Projected cloud points over the image rectangle, colored by range."""
    with plt.rc_context(STYLE):
        fig, ax = _figure(1.0, height / width)
        if overlay.shape[0]:
            sc = ax.scatter(overlay[:, 0], overlay[:, 1], c=overlay[:, 2], s=2, cmap="viridis")
            fig.colorbar(sc, ax=ax, label="range [m]")
        ax.set_xlim(0, width)
        ax.set_ylim(height, 0)
        ax.set_aspect("equal")
        ax.set_xlabel("u [px]")
        ax.set_ylabel("v [px]")
        return _save(fig, path)


def _track_color(track_id: int):
    return plt.cm.tab20((track_id * 7) % 20)


def plot_obstacle_map(obstacles: ObstacleMap, path: str, extent: float = 100.0, points: Optional[np.ndarray] = None):
    """Bird's-eye view; box color follows the track id, labels annotate classes."""
    with plt.rc_context(STYLE):
        fig, ax = _figure(0.8, 1.0)
        if points is not None and len(points):
            ax.plot(points[:, 0], points[:, 1], ",", color="0.6")
        for o in obstacles.obstacles:
            corners = o.box.corners()
            closed = np.vstack([corners, corners[:1]])
            ls = "-" if o.source is Source.CAMERA_FUSED else "--"
            ax.plot(closed[:, 0], closed[:, 1], ls, color=_track_color(o.track_id), lw=1.2)
            ax.annotate(
                f"{o.track_id}:{class_name(o.label)}",
                (o.box.center[0], o.box.center[1]),
                fontsize=6,
                ha="center",
            )
        ax.plot([0], [0], "k^", ms=6)
        ax.set_xlim(-extent, extent)
        ax.set_ylim(-extent, extent)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(f"frame {obstacles.frame_index}")
        return _save(fig, path)
