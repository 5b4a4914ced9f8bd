"""Camera / LiDAR geometry.

Points live in the LiDAR frame (meters). A 3x4 projection matrix maps a
homogeneous LiDAR point to a homogeneous pixel; a positive third
homogeneous coordinate means the point is in front of the camera.

Back-projection goes through the Moore-Penrose pseudo-inverse of the
projection matrix. Four corner rays of an image box span a pyramid
("frustum") whose side planes are used to filter points without
projecting them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import (
    DegenerateCalibrationError,
    DegenerateFrustumError,
    DegeneratePixelError,
    ParseError,
)

# singular values below this fraction of the largest are treated as zero
PINV_RCOND = 1e-10
# minimum |d1 x d2| for two unit corner rays to define a plane
MIN_PLANE_SINE = 1e-10


@dataclass(frozen=True)
class BBox2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"invalid box {self.as_tuple()}")

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def corners(self) -> np.ndarray:
        """Corners in cyclic order: top-left, top-right, bottom-right, bottom-left."""
        return np.array(
            [
                [self.x_min, self.y_min],
                [self.x_max, self.y_min],
                [self.x_max, self.y_max],
                [self.x_min, self.y_max],
            ]
        )


@dataclass(frozen=True, eq=False)
class CalibrationModel:
    """Projection matrix plus the quantities derived from it at load time.

    Build with :meth:`from_matrix`; ``pinv_matrix`` and ``camera_center``
    are computed there and never recomputed.
    """

    proj_matrix: np.ndarray
    pinv_matrix: np.ndarray
    camera_center: np.ndarray
    image_width: int
    image_height: int

    @classmethod
    def from_matrix(cls, proj_matrix, image_width: int, image_height: int) -> "CalibrationModel":
        P = np.array(proj_matrix, dtype=float)
        if P.shape != (3, 4):
            raise ValueError(f"projection matrix must be 3x4, got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise DegenerateCalibrationError("projection matrix has non-finite entries")
        if int(image_width) <= 0 or int(image_height) <= 0:
            raise ValueError("image dimensions must be positive")

        _, s, vt = np.linalg.svd(P)
        if s[0] == 0.0 or s[2] < PINV_RCOND * s[0]:
            raise DegenerateCalibrationError(
                f"projection matrix is rank deficient (singular values {s})"
            )
        null = vt[-1]
        if abs(null[3]) < PINV_RCOND * np.linalg.norm(null):
            raise DegenerateCalibrationError("camera center is at infinity")
        center = null[:3] / null[3]
        pinv = np.linalg.pinv(P, rcond=PINV_RCOND)

        for arr in (P, pinv, center):
            arr.setflags(write=False)
        return cls(P, pinv, center, int(image_width), int(image_height))

    def with_scale(self, k: float) -> "CalibrationModel":
        return CalibrationModel.from_matrix(k * self.proj_matrix, self.image_width, self.image_height)


def parse_calibration(text: str, source: Optional[str] = None) -> CalibrationModel:
    """Parse the calibration text format.

    Line 1 holds ``width height``; lines 2-4 hold four decimals each (the
    rows of the projection matrix). Blank lines and ``#`` comments are
    skipped.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise ParseError("empty calibration file", source=source)

    lineno, dims = rows[0]
    if len(dims) != 2:
        raise ParseError(f"expected 'width height', got {len(dims)} fields", lineno, source)
    try:
        width, height = int(dims[0]), int(dims[1])
    except ValueError:
        raise ParseError("image dimensions must be integers", lineno, source) from None
    if width <= 0 or height <= 0:
        raise ParseError("image dimensions must be positive", lineno, source)

    matrix_rows = rows[1:]
    for lineno, fields in matrix_rows:
        if len(fields) != 4:
            raise ParseError(f"expected 4 numbers, got {len(fields)}", lineno, source)
    if len(matrix_rows) != 3:
        last = matrix_rows[-1][0] if matrix_rows else rows[0][0]
        raise ParseError(f"expected 3 matrix rows, got {len(matrix_rows)}", last, source)

    P = np.empty((3, 4))
    for r, (lineno, fields) in enumerate(matrix_rows):
        try:
            P[r] = [float(f) for f in fields]
        except ValueError:
            raise ParseError("non-numeric matrix entry", lineno, source) from None
        if not np.all(np.isfinite(P[r])):
            raise ParseError("non-finite matrix entry", lineno, source)
    return CalibrationModel.from_matrix(P, width, height)


def load_calibration(source) -> CalibrationModel:
    """Load a calibration from a path or from the file content itself."""
    if hasattr(source, "read"):
        return parse_calibration(source.read())
    text = str(source)
    if "\n" not in text:
        with open(text, encoding="utf-8") as fh:
            return parse_calibration(fh.read(), source=text)
    return parse_calibration(text)


def format_calibration(calib: CalibrationModel) -> str:
    lines = [f"{calib.image_width} {calib.image_height}"]
    for row in calib.proj_matrix:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def _homogeneous(points: np.ndarray) -> np.ndarray:
    return np.hstack([points, np.ones((points.shape[0], 1))])


def project_points(calib: CalibrationModel, points) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized projection.

    Returns ``(uv, in_front)``; ``uv`` rows for points not in front of the
    camera are NaN.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    h = _homogeneous(pts) @ calib.proj_matrix.T
    in_front = h[:, 2] > 0
    uv = np.full((pts.shape[0], 2), np.nan)
    uv[in_front] = h[in_front, :2] / h[in_front, 2:3]
    return uv, in_front


def project_to_image(calib: CalibrationModel, p) -> Optional[Tuple[float, float]]:
    h = calib.proj_matrix @ np.append(np.asarray(p, dtype=float), 1.0)
    if not h[2] > 0:
        return None
    return (float(h[0] / h[2]), float(h[1] / h[2]))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def _back_project_direction(calib: CalibrationModel, u: float, v: float) -> np.ndarray:
    X = calib.pinv_matrix @ np.array([u, v, 1.0])
    # X - X[3]*C is a point at infinity on the same line: a direction that
    # maps to (u, v, 1) under the projection, so no division by X[3].
    d = X[:3] - X[3] * calib.camera_center
    norm = np.linalg.norm(d)
    if not np.isfinite(norm) or norm <= PINV_RCOND * max(1.0, np.linalg.norm(X[:3])):
        raise DegeneratePixelError(f"pixel ({u}, {v}) back-projects onto the camera center")
    d = d / norm
    if calib.proj_matrix[2, :3] @ d < 0:
        d = -d
    return d


def back_project(calib: CalibrationModel, pixel) -> Ray:
    u, v = float(pixel[0]), float(pixel[1])
    return Ray(calib.camera_center.copy(), _back_project_direction(calib, u, v))


@dataclass(frozen=True, eq=False)
class Frustum:
    """Four inward-facing planes through ``apex``.

    A point ``p`` is inside when ``normals @ p + offsets > 0`` for every
    plane and ``front_plane @ [p, 1] > 0`` (in front of the camera).
    """

    normals: np.ndarray  # (4, 3)
    offsets: np.ndarray  # (4,)
    apex: np.ndarray
    corner_directions: np.ndarray  # (4, 3)
    front_plane: np.ndarray = field(repr=False)  # third row of the projection matrix

    @property
    def planes(self):
        return [(self.normals[i], float(self.offsets[i])) for i in range(4)]


def build_frustum(calib: CalibrationModel, box: BBox2D) -> Frustum:
    dirs = np.array([_back_project_direction(calib, u, v) for u, v in box.corners()])
    apex = calib.camera_center.copy()
    centroid = dirs.mean(axis=0)

    normals = np.empty((4, 3))
    for i in range(4):
        n = np.cross(dirs[i], dirs[(i + 1) % 4])
        norm = np.linalg.norm(n)
        if norm < MIN_PLANE_SINE:
            raise DegenerateFrustumError(f"corner rays {i} and {(i + 1) % 4} are collinear")
        n = n / norm
        if n @ centroid < 0:
            n = -n
        normals[i] = n
    offsets = -normals @ apex
    if np.any(normals @ centroid <= 0):
        raise DegenerateFrustumError("frustum has no interior")

    front = calib.proj_matrix[2].copy()
    for arr in (normals, offsets, apex, dirs, front):
        arr.setflags(write=False)
    return Frustum(normals, offsets, apex, dirs, front)


def contains_points(frustum: Frustum, points) -> np.ndarray:
    """Boolean membership mask for an (N, 3) array."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    inside = np.all(pts @ frustum.normals.T + frustum.offsets > 0, axis=1)
    front = pts @ frustum.front_plane[:3] + frustum.front_plane[3] > 0
    return inside & front


def contains(frustum: Frustum, p) -> bool:
    return bool(contains_points(frustum, np.asarray(p, dtype=float)[None, :])[0])
