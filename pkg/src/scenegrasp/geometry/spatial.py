"""Nearest-neighbor and radius queries over a fixed point set."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .mesh import MeshError


class SpatialIndex:
    """KD-tree over a point set.

    Results are exact: the nearest neighbor matches a linear scan, and radius
    queries return every index within the (closed) ball.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
            raise MeshError("SpatialIndex needs a non-empty (n, 3) point set")
        self._points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        return self._points

    def nearest(self, query) -> tuple[int, float]:
        """Index and Euclidean distance of the closest indexed point."""
        q = np.asarray(query, dtype=np.float64).reshape(3)
        dist, idx = self._tree.query(q)
        return int(idx), float(dist)

    def nearest_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        dist, idx = self._tree.query(q)
        return idx.astype(np.int64), dist

    def within_radius(self, query, radius: float) -> np.ndarray:
        """Sorted indices of points with distance <= radius."""
        q = np.asarray(query, dtype=np.float64).reshape(3)
        ids = self._tree.query_ball_point(q, radius)
        return np.array(sorted(ids), dtype=np.int64)


def nearest_vertex(index: SpatialIndex, query) -> tuple[int, float]:
    """Functional form of ``SpatialIndex.nearest``."""
    return index.nearest(query)
