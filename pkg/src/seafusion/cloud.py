"""Point-cloud conditioning: accumulation, range filtering, sea-plane projection,
Euclidean clustering and PCA box fitting."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .errors import InvalidClusterError, InvalidOrientationError, SequencingError


@dataclass
class PointCloud:
    timestamp: float
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        self.points = pts

    def __len__(self):
        return self.points.shape[0]


class CloudAccumulator:
    """Keeps the ``window`` most recent clouds and merges them."""

    def __init__(self, window: int = 3):
        if int(window) < 1:
            raise ValueError("accumulation window must be >= 1")
        self.window = int(window)
        self.history: Deque[PointCloud] = deque(maxlen=self.window)

    def accumulate(self, cloud: PointCloud) -> PointCloud:
        if self.history and cloud.timestamp < self.history[-1].timestamp:
            raise SequencingError(
                f"cloud at t={cloud.timestamp} after t={self.history[-1].timestamp}"
            )
        self.history.append(cloud)
        merged = np.concatenate([c.points for c in self.history], axis=0)
        return PointCloud(cloud.timestamp, merged)


def accumulate(acc: CloudAccumulator, cloud: PointCloud) -> PointCloud:
    return acc.accumulate(cloud)


def filter_mask(points: np.ndarray, r_min: float, r_max: float) -> np.ndarray:
    rng = np.hypot(points[:, 0], points[:, 1])
    return (rng >= r_min) & (rng <= r_max)


def filter_cloud(cloud: PointCloud, r_min: float = 2.0, r_max: float = 100.0) -> PointCloud:
    """Drop self-returns (horizontal range below r_min) and far points (above r_max)."""
    if not 0 <= r_min < r_max:
        raise ValueError(f"need 0 <= r_min < r_max, got {r_min}, {r_max}")
    return PointCloud(cloud.timestamp, cloud.points[filter_mask(cloud.points, r_min, r_max)])


def _rotation(orientation) -> Optional[Rotation]:
    if orientation is None:
        return None
    q = np.asarray(orientation, dtype=float)
    if q.shape != (4,) or not np.all(np.isfinite(q)):
        raise InvalidOrientationError(f"quaternion must be 4 finite numbers, got {q}")
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise InvalidOrientationError(f"quaternion norm {np.linalg.norm(q)} is not 1")
    return Rotation.from_quat(q)  # scalar-last (x, y, z, w)


def project_to_sea_plane(cloud: PointCloud, orientation=None) -> PointCloud:
    """Rotate into the sea frame by the vehicle orientation, then zero z.

    ``orientation`` is a unit quaternion (x, y, z, w); ``None`` is identity.
    """
    rot = _rotation(orientation)
    pts = cloud.points if rot is None else rot.apply(cloud.points)
    out = np.array(pts, dtype=float, copy=True).reshape(-1, 3)
    out[:, 2] = 0.0
    return PointCloud(cloud.timestamp, out)


@dataclass(frozen=True)
class ClusterParams:
    tolerance: float = 3.0
    min_size: int = 30
    max_size: int = 10000

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("cluster tolerance must be positive")
        if not 0 < self.min_size <= self.max_size:
            raise ValueError("need 0 < min_size <= max_size")


@dataclass(frozen=True, eq=False)
class Cluster:
    point_indices: np.ndarray
    centroid: np.ndarray

    def __len__(self):
        return len(self.point_indices)


# -- connected components under a distance tolerance -------------------------

# cell pairs with at most this many point pairs are checked by brute force
_BRUTE_PAIR_LIMIT = 256
_QUERY_CHUNK = 64


def _cell_offsets(active: np.ndarray, cell: float, tol: float) -> List[np.ndarray]:
    ranges = [range(-2, 3) if a else range(0, 1) for a in active]
    offsets = []
    for off in itertools.product(*ranges):
        o = np.array(off)
        if not np.any(o):
            continue
        nz = o[o != 0]
        if nz[0] < 0:  # keep one of each +/- pair
            continue
        gap = np.maximum(np.abs(o) - 1, 0) * cell
        if gap @ gap <= tol * tol:
            offsets.append(o)
    return offsets


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def radius_components(points, tolerance: float) -> np.ndarray:
    """Label points by single-linkage components: i ~ j when |p_i - p_j| <= tolerance.

    Exact. Points are binned into cells of side tolerance/sqrt(d), inside
    which every pair is within tolerance, so only neighboring cells need a
    closest-pair check.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = pts.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    tol = float(tolerance)
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    active = span > 0
    dims = max(1, int(active.sum()))
    cell = tol / math.sqrt(dims) * (1.0 - 1e-9)

    grid = np.floor((pts - lo) / cell).astype(np.int64)
    extent = grid.max(axis=0) + 5
    if math.prod(int(e) for e in extent) >= 2**62:
        return _components_by_pairs(pts, tol)
    grid += 2
    strides = np.array([extent[1] * extent[2], extent[2], 1], dtype=np.int64)
    keys = grid @ strides

    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    uniq, starts, counts = np.unique(sorted_keys, return_index=True, return_counts=True)
    n_cells = uniq.shape[0]
    cell_of = np.empty(n, dtype=np.int64)
    cell_of[order] = np.repeat(np.arange(n_cells), counts)

    pair_a, pair_b = [], []
    for off in _cell_offsets(active, cell, tol):
        nk = uniq + off @ strides
        idx = np.searchsorted(uniq, nk)
        idx_c = np.minimum(idx, n_cells - 1)
        ok = (idx < n_cells) & (uniq[idx_c] == nk)
        pair_a.append(np.flatnonzero(ok))
        pair_b.append(idx_c[ok])
    pa = np.concatenate(pair_a) if pair_a else np.zeros(0, dtype=np.int64)
    pb = np.concatenate(pair_b) if pair_b else np.zeros(0, dtype=np.int64)

    work = counts[pa] * counts[pb]
    small = work <= _BRUTE_PAIR_LIMIT
    edges_a, edges_b = [], []
    if np.any(small):
        sa, sb = pa[small], pb[small]
        na, nb = counts[sa], counts[sb]
        tot = na * nb
        pid = np.repeat(np.arange(sa.shape[0]), tot)
        local = np.arange(tot.sum()) - np.repeat(np.cumsum(tot) - tot, tot)
        ia = order[starts[sa][pid] + local // nb[pid]]
        ib = order[starts[sb][pid] + local % nb[pid]]
        diff = pts[ia] - pts[ib]
        close = np.einsum("ij,ij->i", diff, diff) <= tol * tol
        hit = np.unique(pid[close])
        edges_a.append(sa[hit])
        edges_b.append(sb[hit])

    ea = np.concatenate(edges_a) if edges_a else np.zeros(0, dtype=np.int64)
    eb = np.concatenate(edges_b) if edges_b else np.zeros(0, dtype=np.int64)
    graph = coo_matrix((np.ones(ea.shape[0], dtype=np.int8), (ea, eb)), shape=(n_cells, n_cells))
    _, cell_label = connected_components(graph, directed=False)

    big = np.flatnonzero(~small)
    if big.size:
        parent = list(range(int(cell_label.max()) + 1))
        trees = {}
        # cheapest pairs first: they tend to merge components early
        for k in big[np.argsort(work[big], kind="stable")]:
            a, b = int(pa[k]), int(pb[k])
            ra, rb = _find(parent, int(cell_label[a])), _find(parent, int(cell_label[b]))
            if ra == rb:
                continue
            if counts[a] > counts[b]:
                a, b = b, a
            if b not in trees:
                trees[b] = cKDTree(pts[order[starts[b]:starts[b] + counts[b]]])
            tree = trees[b]
            qa = pts[order[starts[a]:starts[a] + counts[a]]]
            d_center = np.linalg.norm(qa - tree.data.mean(axis=0), axis=1)
            qa = qa[np.argsort(d_center, kind="stable")]
            for s in range(0, qa.shape[0], _QUERY_CHUNK):
                dist, _ = tree.query(qa[s:s + _QUERY_CHUNK], k=1, distance_upper_bound=tol * (1 + 1e-9))
                if np.any(dist <= tol):
                    parent[ra] = rb
                    break
        roots = np.array([_find(parent, i) for i in range(len(parent))])
        cell_label = roots[cell_label]

    _, labels = np.unique(cell_label[cell_of], return_inverse=True)
    return labels.astype(np.int64)


def _components_by_pairs(pts: np.ndarray, tol: float) -> np.ndarray:
    n = pts.shape[0]
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return connected_components(graph, directed=False)[1].astype(np.int64)


def euclidean_cluster(cloud, params: ClusterParams = ClusterParams()) -> List[Cluster]:
    """Single-linkage clusters within the size limits.

    Ordered by descending size, ties broken by smallest member index.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        return []
    labels = radius_components(pts, params.tolerance)
    order = np.argsort(labels, kind="stable")
    _, starts, counts = np.unique(labels[order], return_index=True, return_counts=True)
    clusters = []
    for s, c in zip(starts, counts):
        if params.min_size <= c <= params.max_size:
            members = np.sort(order[s:s + c])
            clusters.append(Cluster(members, pts[members].mean(axis=0)))
    clusters.sort(key=lambda cl: (-len(cl), int(cl.point_indices[0])))
    return clusters


# -- oriented boxes -----------------------------------------------------------

EIGEN_TIE = 1e-9


@dataclass(frozen=True)
class OrientedBox:
    center: np.ndarray
    yaw: float
    length: float
    width: float
    height: float = 0.0

    def corners(self) -> np.ndarray:
        """Four sea-plane corners (x, y), counter-clockwise."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2, self.width / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center)[:2]


def fold_yaw(yaw: float) -> float:
    y = math.fmod(yaw, math.pi)
    if y < 0:
        y += math.pi
    if y >= math.pi:
        y -= math.pi
    return y


def fit_oriented_box(cloud, cluster: Optional[Cluster] = None, raw_points=None) -> OrientedBox:
    """PCA-aligned 2D box around a sea-plane cluster.

    ``raw_points`` (pre-projection, same indexing as ``cloud``) only feeds
    the informational height.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float).reshape(-1, 3)
    idx = np.arange(pts.shape[0]) if cluster is None else np.asarray(cluster.point_indices)
    if idx.size == 0:
        raise InvalidClusterError("cannot fit a box to an empty cluster")
    xy = pts[idx, :2]
    mean = xy.mean(axis=0)
    centered = xy - mean
    cov = centered.T @ centered / xy.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] - evals[0] <= EIGEN_TIE * max(1.0, abs(evals[1])):
        yaw = 0.0
    else:
        major = evecs[:, 1]
        yaw = fold_yaw(math.atan2(major[1], major[0]))

    def extents(theta):
        c, s = math.cos(theta), math.sin(theta)
        u = centered @ np.array([c, s])
        v = centered @ np.array([-s, c])
        return u.min(), u.max(), v.min(), v.max()

    u0, u1, v0, v1 = extents(yaw)
    if v1 - v0 > u1 - u0:
        yaw = fold_yaw(yaw + math.pi / 2)
        u0, u1, v0, v1 = extents(yaw)
    c, s = math.cos(yaw), math.sin(yaw)
    mu, mv = (u0 + u1) / 2, (v0 + v1) / 2
    center = np.array([mean[0] + c * mu - s * mv, mean[1] + s * mu + c * mv, 0.0])

    height = 0.0
    if raw_points is not None:
        z = np.asarray(raw_points, dtype=float).reshape(-1, 3)[idx, 2]
        height = float(z.max() - z.min())
    return OrientedBox(center, yaw, float(u1 - u0), float(v1 - v0), height)
