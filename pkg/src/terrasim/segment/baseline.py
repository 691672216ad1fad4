"""Geometric voxel labeler: height above ground, then local planarity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..core.ground import GroundElevationModel
from ..core.types import TerrainClass
from ..voxelize import UNLABELED, VoxelBlock


@dataclass(frozen=True)
class BaselineParams:
    ground_height: float = 0.5
    planarity_rms: float = 0.15
    # planar seeds grow this many 26-neighbor steps through raised occupied cells;
    # 0 gives the bare per-cell rule, which misses roof/wall junctions
    grow: int = 2


def _neighborhood_moments(occ: np.ndarray, small: np.ndarray):
    """Count, first and second moments of occupied 3x3x3 neighbor offsets, in meters."""
    occ = occ.astype(np.float64)
    offs = np.array(np.meshgrid([-1, 0, 1], [-1, 0, 1], [-1, 0, 1], indexing="ij"), dtype=np.float64)
    offs = offs * small.reshape(3, 1, 1, 1)

    def corr(weights):
        return ndimage.correlate(occ, weights, mode="constant", cval=0.0)

    n = corr(np.ones((3, 3, 3)))
    first = [corr(offs[a]) for a in range(3)]
    second = {}
    for a in range(3):
        for b in range(a, 3):
            second[a, b] = corr(offs[a] * offs[b])
    return n, first, second


def planarity_residual(occ: np.ndarray, small, cells: np.ndarray) -> np.ndarray:
    """RMS distance of the occupied 3x3x3 neighbors of each cell to their best-fit plane."""
    small = np.asarray(small, dtype=np.float64)
    n, first, second = _neighborhood_moments(occ, small)
    i, j, k = cells[:, 0], cells[:, 1], cells[:, 2]
    cnt = n[i, j, k]
    mean = np.stack([f[i, j, k] for f in first], axis=1) / cnt[:, None]
    cov = np.empty((len(cells), 3, 3))
    for (a, b), s in second.items():
        cov[:, a, b] = cov[:, b, a] = s[i, j, k] / cnt - mean[:, a] * mean[:, b]
    lam = np.linalg.eigvalsh(cov)[:, 0]
    return np.sqrt(np.maximum(lam, 0.0))


class BaselineLabeler:
    """Ground if the cell center is within ``ground_height`` of the ground model,
    otherwise ManMade when the occupied non-ground neighborhood is planar (or
    within ``grow`` steps of such a cell), otherwise Vegetation."""

    def __init__(self, ground_model: GroundElevationModel, params: BaselineParams = BaselineParams()):
        self.ground_model = ground_model
        self.params = params

    def label_block(self, block: VoxelBlock) -> np.ndarray:
        return baseline_geometric_label(block, self.ground_model, self.params)


def baseline_geometric_label(block: VoxelBlock, ground_model: GroundElevationModel,
                             params: BaselineParams = BaselineParams()) -> np.ndarray:
    cells = block.occupied_cells()
    grid = np.full(block.dims, UNLABELED, dtype=np.int8)
    if len(cells) == 0:
        return grid
    centers = block.cell_centers(cells)
    above = centers[:, 2] - ground_model.elevation_at(centers[:, 0], centers[:, 1])
    is_ground = above <= params.ground_height
    labels = np.full(len(cells), TerrainClass.VEGETATION, dtype=np.int8)
    labels[is_ground] = TerrainClass.GROUND
    raised = cells[~is_ground]
    if len(raised):
        occ = np.zeros(block.dims, dtype=np.uint8)
        occ[raised[:, 0], raised[:, 1], raised[:, 2]] = 1
        rms = planarity_residual(occ, block.small, raised)
        planar = np.zeros(block.dims, dtype=bool)
        seeds = raised[rms <= params.planarity_rms]
        planar[seeds[:, 0], seeds[:, 1], seeds[:, 2]] = True
        if params.grow > 0 and len(seeds):
            planar = ndimage.binary_dilation(planar, structure=np.ones((3, 3, 3), dtype=bool),
                                             iterations=params.grow, mask=occ > 0)
        labels[~is_ground] = np.where(planar[raised[:, 0], raised[:, 1], raised[:, 2]],
                                      TerrainClass.MANMADE, TerrainClass.VEGETATION)
    grid[cells[:, 0], cells[:, 1], cells[:, 2]] = labels
    return grid
