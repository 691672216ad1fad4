"""Gridded ground elevation model with nearest-valid-cell hole filling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .types import PointCloud, TerrainClass


@dataclass
class GroundElevationModel:
    """Elevation grid indexed ``elevation[ix, iy]``; ``origin`` is the grid's min corner."""

    origin: tuple
    cell: float
    elevation: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> tuple:
        return self.elevation.shape

    def cell_of(self, x, y):
        """Grid index of world XY, clamped to the grid so every query is answerable."""
        nx, ny = self.elevation.shape
        ix = np.floor((np.asarray(x, dtype=np.float64) - self.origin[0]) / self.cell).astype(np.int64)
        iy = np.floor((np.asarray(y, dtype=np.float64) - self.origin[1]) / self.cell).astype(np.int64)
        return np.clip(ix, 0, nx - 1), np.clip(iy, 0, ny - 1)

    def elevation_at(self, x, y):
        ix, iy = self.cell_of(x, y)
        return self.elevation[ix, iy]


def _grid_frame(xy: np.ndarray, cell: float, extent=None):
    lo = xy.min(axis=0)
    if extent is not None:
        lo = np.minimum(np.array(extent[:2], dtype=np.float64), lo)
    origin = np.floor(lo / cell) * cell
    dims = np.floor((xy.max(axis=0) - origin) / cell).astype(np.int64) + 1
    if extent is not None:
        # the extent's max edge is exclusive
        ext = np.ceil((np.array(extent[2:], dtype=np.float64) - origin) / cell - 1e-9)
        dims = np.maximum(dims, ext.astype(np.int64))
    return (float(origin[0]), float(origin[1])), (int(dims[0]), int(dims[1]))


def fill_nearest(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Copy each invalid cell from the nearest valid cell (index-space Euclidean).

    Equidistant candidates resolve to the lowest flat (row-major) cell index.
    """
    if not valid.any():
        raise ValueError("cannot fill a grid with no valid cells")
    out = values.copy()
    if valid.all():
        return out
    src = np.argwhere(valid)
    dst = np.argwhere(~valid)
    tree = cKDTree(src)
    d, _ = tree.query(dst, k=1)
    flat = src[:, 0] * valid.shape[1] + src[:, 1]
    for (i, j), r in zip(dst, d):
        cands = tree.query_ball_point((i, j), r + 1e-6)
        cands = np.asarray(cands, dtype=np.int64)
        d2 = (src[cands, 0] - i) ** 2 + (src[cands, 1] - j) ** 2
        pick = cands[d2 == d2.min()]
        best = pick[np.argmin(flat[pick])]
        out[i, j] = values[src[best, 0], src[best, 1]]
    return out


def build_ground_model(cloud: PointCloud, cell: float = 1.0, extent=None) -> GroundElevationModel:
    """Median z of Ground-labeled points per cell, holes filled from the nearest valid cell.

    ``extent`` = (xmin, ymin, xmax, ymax) widens the grid beyond the ground points.
    """
    if cell <= 0:
        raise ValueError("cell size must be positive")
    if cloud.labels is None:
        raise ValueError("ground model needs a labeled cloud")
    mask = cloud.labels == TerrainClass.GROUND
    if not mask.any():
        raise ValueError("cloud has no Ground points")
    pts = cloud.xyz[mask]
    origin, dims = _grid_frame(pts[:, :2], cell, extent)
    ix = np.floor((pts[:, 0] - origin[0]) / cell).astype(np.int64)
    iy = np.floor((pts[:, 1] - origin[1]) / cell).astype(np.int64)
    ix = np.clip(ix, 0, dims[0] - 1)
    iy = np.clip(iy, 0, dims[1] - 1)
    flat = ix * dims[1] + iy
    order = np.lexsort((pts[:, 2], flat))
    flat_s = flat[order]
    z_s = pts[order, 2]
    starts = np.flatnonzero(np.r_[True, flat_s[1:] != flat_s[:-1]])
    ends = np.r_[starts[1:], len(flat_s)]
    # median of a z-sorted run = mean of its one or two middle entries
    lo = starts + (ends - starts - 1) // 2
    hi = starts + (ends - starts) // 2
    med = 0.5 * (z_s[lo] + z_s[hi])
    elev = np.zeros(dims, dtype=np.float64)
    valid = np.zeros(dims, dtype=bool)
    cells = flat_s[starts]
    elev.flat[cells] = med
    valid.flat[cells] = True
    return GroundElevationModel(origin, float(cell), fill_nearest(elev, valid), valid)


def estimate_ground_model(cloud: PointCloud, cell: float = 1.0, window: float = 20.0,
                          extent=None) -> GroundElevationModel:
    """Ground surface for unlabeled clouds: per-cell minimum z, then a grey opening.

    The opening with a flat ``window``-wide element removes raised structures
    narrower than the window and reproduces planar slopes exactly.
    """
    if cell <= 0 or window <= 0:
        raise ValueError("cell and window must be positive")
    if len(cloud) == 0:
        raise ValueError("cannot estimate ground from an empty cloud")
    pts = cloud.xyz
    origin, dims = _grid_frame(pts[:, :2], cell, extent)
    ix = np.clip(np.floor((pts[:, 0] - origin[0]) / cell).astype(np.int64), 0, dims[0] - 1)
    iy = np.clip(np.floor((pts[:, 1] - origin[1]) / cell).astype(np.int64), 0, dims[1] - 1)
    zmin = np.full(dims, np.inf)
    np.minimum.at(zmin, (ix, iy), pts[:, 2])
    valid = np.isfinite(zmin)
    filled = fill_nearest(np.where(valid, zmin, 0.0), valid)
    size = max(1, int(round(window / cell)) | 1)
    opened = ndimage.grey_opening(filled, size=(size, size), mode="nearest")
    return GroundElevationModel(origin, float(cell), opened, valid)
