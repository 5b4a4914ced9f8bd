"""Camera/LiDAR obstacle detection and tracking for unmanned surface vehicles."""

from .cloud import ClusterParams, OrientedBox, PointCloud, euclidean_cluster, fit_oriented_box
from .fusion3d import FrameBundle, FusionConfig, Obstacle3D, PipelineOptions, PipelineState, pipeline_step
from .geometry import BBox2D, CalibrationModel, back_project, build_frustum, contains, project_to_image

__version__ = "0.1.0"

__all__ = [
    "BBox2D",
    "CalibrationModel",
    "ClusterParams",
    "FrameBundle",
    "FusionConfig",
    "Obstacle3D",
    "OrientedBox",
    "PipelineOptions",
    "PipelineState",
    "PointCloud",
    "back_project",
    "build_frustum",
    "contains",
    "euclidean_cluster",
    "fit_oriented_box",
    "pipeline_step",
    "project_to_image",
]
