"""Radius, cylinder and nearest-neighbor queries over a fixed point set."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class SpatialIndex:
    """Immutable index over (N, 3) points.

    Result index arrays are sorted ascending so they compare equal to a
    brute-force scan. Nearest-neighbor ties resolve to the lowest point index.
    """

    def __init__(self, points):
        self.points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if not np.all(np.isfinite(self.points)):
            raise ValueError("index points must be finite")
        n = len(self.points)
        self._tree3 = cKDTree(self.points) if n else None
        self._tree2 = cKDTree(self.points[:, :2]) if n else None

    def __len__(self) -> int:
        return len(self.points)

    @staticmethod
    def _check_radius(radius):
        if not radius > 0:
            raise ValueError(f"query radius must be positive, got {radius}")

    def query_radius(self, center, radius: float) -> np.ndarray:
        """Indices with 3D distance <= radius."""
        self._check_radius(radius)
        if self._tree3 is None:
            return np.zeros(0, dtype=np.int64)
        c = np.asarray(center, dtype=np.float64).reshape(3)
        idx = np.asarray(self._tree3.query_ball_point(c, radius * (1 + 1e-12)), dtype=np.int64)
        # exact filter against the definition; the kd-tree radius is padded slightly
        d2 = np.sum((self.points[idx] - c) ** 2, axis=1)
        return np.sort(idx[d2 <= radius * radius])

    def query_cylinder(self, center, radius: float) -> np.ndarray:
        """Indices with 2D (XY) distance <= radius, any z."""
        self._check_radius(radius)
        if self._tree2 is None:
            return np.zeros(0, dtype=np.int64)
        c = np.asarray(center, dtype=np.float64).ravel()[:2]
        idx = np.asarray(self._tree2.query_ball_point(c, radius * (1 + 1e-12)), dtype=np.int64)
        d2 = np.sum((self.points[idx, :2] - c) ** 2, axis=1)
        return np.sort(idx[d2 <= radius * radius])

    def nearest(self, point) -> int:
        """Index of a closest point (3D), or -1 for an empty index."""
        idx, _ = self.nearest_many(np.asarray(point, dtype=np.float64).reshape(1, 3))
        return int(idx[0])

    def nearest_many(self, queries) -> tuple:
        """Nearest index and distance per query row, ties to the lowest index."""
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if self._tree3 is None:
            return np.full(len(q), -1, dtype=np.int64), np.full(len(q), np.inf)
        k = 2 if len(self.points) > 1 else 1
        dist, idx = self._tree3.query(q, k=k)
        dist = np.asarray(dist, dtype=np.float64).reshape(len(q), k)
        idx = np.asarray(idx, dtype=np.int64).reshape(len(q), k)
        best_i, best_d = idx[:, 0].copy(), dist[:, 0].copy()
        if k == 2:
            # only near-ties need the exhaustive check for a lower index
            suspect = np.nonzero(dist[:, 1] <= dist[:, 0] * (1 + 1e-9) + 1e-12)[0]
            for i in suspect:
                cands = np.asarray(
                    self._tree3.query_ball_point(q[i], dist[i, 0] * (1 + 1e-9) + 1e-12),
                    dtype=np.int64)
                d2 = np.sum((self.points[cands] - q[i]) ** 2, axis=1)
                m = d2.min()
                best_i[i] = cands[d2 == m].min()
                best_d[i] = float(np.sqrt(m))
        return best_i, best_d
