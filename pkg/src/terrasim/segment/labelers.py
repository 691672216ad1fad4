"""Voxel labeler implementations and the cloud-level segmentation driver."""
from __future__ import annotations

from typing import Protocol

import numpy as np

from ..core.types import PointCloud
from ..voxelize import UNLABELED, VoxelBlock, VoxelParams, point_labels_from_voxels, \
    voxel_labels_from_points, voxelize
from .unet import UNetConfig, WeightBundle, unet_forward


class VoxelLabeler(Protocol):
    def label_block(self, block: VoxelBlock) -> np.ndarray:
        """Dense int8 grid: a TerrainClass code on every occupied cell, -1 elsewhere."""


class UNetLabeler:
    def __init__(self, weights: WeightBundle, config: UNetConfig = None):
        self.weights = weights
        self.config = config or weights.config

    def label_block(self, block: VoxelBlock) -> np.ndarray:
        probs = unet_forward(block.occupancy[..., None], self.weights, self.config)
        hard = np.argmax(probs, axis=-1).astype(np.int8)
        return np.where(block.occupancy > 0, hard, UNLABELED).astype(np.int8)


class ImportLabeler:
    """Pass-through: voxel majority of labels supplied per cloud point."""

    def __init__(self, point_labels):
        self.point_labels = np.asarray(point_labels)

    def label_block(self, block: VoxelBlock) -> np.ndarray:
        return voxel_labels_from_points(block, self.point_labels).labels


def segment_cloud(cloud: PointCloud, labeler: VoxelLabeler,
                  params: VoxelParams = VoxelParams()) -> PointCloud:
    """Voxelize, label occupied cells block by block, and copy cell labels to points."""
    out = np.full(len(cloud), 255, dtype=np.uint8)
    for block in voxelize(cloud, params):
        grid = np.asarray(labeler.label_block(block))
        if grid.shape != block.dims:
            raise ValueError(f"labeler returned grid {grid.shape} for block of dims {block.dims}")
        if not np.array_equal(grid >= 0, block.occupancy > 0):
            raise ValueError(f"labeler output for block {block.index} does not cover exactly "
                             f"the occupied cells")
        labeled = VoxelBlock(block.index, block.origin, block.small, block.occupancy,
                             block.point_ids, block.cells, grid)
        out[block.point_ids] = point_labels_from_voxels(labeled)
    return cloud.with_labels(out)
