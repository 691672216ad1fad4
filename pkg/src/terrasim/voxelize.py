"""Two-level voxelization: large processing blocks holding dense small-voxel grids."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core.types import PointCloud

UNLABELED = -1


@dataclass(frozen=True)
class VoxelParams:
    large: tuple = (40.0, 40.0, 40.0)
    small: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        for big, little in zip(self.large, self.small):
            if not (big > 0 and little > 0):
                raise ValueError("voxel sizes must be positive")
            ratio = big / little
            if abs(ratio - round(ratio)) > 1e-9 * ratio:
                raise ValueError(f"large voxel size {big} is not divisible by small size {little}")

    @property
    def dims(self) -> tuple:
        return tuple(int(round(b / s)) for b, s in zip(self.large, self.small))


@dataclass
class VoxelBlock:
    index: tuple
    origin: np.ndarray
    small: np.ndarray
    occupancy: np.ndarray
    point_ids: np.ndarray
    cells: np.ndarray
    labels: Optional[np.ndarray] = field(default=None)

    @property
    def dims(self) -> tuple:
        return self.occupancy.shape

    def occupied_cells(self) -> np.ndarray:
        return np.argwhere(self.occupancy)

    def cell_centers(self, cells: np.ndarray) -> np.ndarray:
        return self.origin + (np.asarray(cells, dtype=np.float64) + 0.5) * self.small


def voxelize(cloud: PointCloud, params: VoxelParams = VoxelParams()) -> List[VoxelBlock]:
    """Blocks containing at least one point, sorted by block index (i, j, k).

    The grid is anchored at the cloud's min corner floored to multiples of the
    large size. Points on a cell boundary go to the higher cell, except at the
    global max where they are clamped into the last block.
    """
    if len(cloud) == 0:
        raise ValueError("cannot voxelize an empty cloud")
    large = np.array(params.large, dtype=np.float64)
    small = np.array(params.small, dtype=np.float64)
    dims = np.array(params.dims, dtype=np.int64)
    xyz = cloud.xyz
    anchor = np.floor(xyz.min(axis=0) / large) * large
    extent = xyz.max(axis=0) - anchor
    nblocks = np.maximum(1, np.ceil(extent / large).astype(np.int64))
    g = np.floor((xyz - anchor) / small).astype(np.int64)
    g = np.clip(g, 0, nblocks * dims - 1)
    blk = g // dims
    local = g - blk * dims

    key = (blk[:, 0] * nblocks[1] + blk[:, 1]) * nblocks[2] + blk[:, 2]
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    starts = np.flatnonzero(np.r_[True, key_s[1:] != key_s[:-1]])
    ends = np.r_[starts[1:], len(key_s)]
    blocks = []
    for s, e in zip(starts, ends):
        ids = order[s:e]
        bi = tuple(int(v) for v in blk[ids[0]])
        cells = local[ids]
        occ = np.zeros(tuple(dims), dtype=np.uint8)
        occ[cells[:, 0], cells[:, 1], cells[:, 2]] = 1
        blocks.append(VoxelBlock(bi, anchor + np.array(bi) * large, small.copy(), occ, ids, cells))
    return blocks


def _flat(block: VoxelBlock, cells: np.ndarray) -> np.ndarray:
    return np.ravel_multi_index((cells[:, 0], cells[:, 1], cells[:, 2]), block.dims)


def voxel_labels_from_points(block: VoxelBlock, point_labels) -> VoxelBlock:
    """Majority class per occupied cell, ties to the lowest class code.

    ``point_labels`` is indexed by cloud point id (the full cloud's label array).
    """
    labels = np.asarray(point_labels)[block.point_ids].astype(np.int64)
    flat = _flat(block, block.cells)
    counts = np.zeros((block.occupancy.size, 3), dtype=np.int64)
    np.add.at(counts, (flat, labels), 1)
    grid = np.full(block.occupancy.size, UNLABELED, dtype=np.int8)
    occ = block.occupancy.ravel() > 0
    grid[occ] = np.argmax(counts[occ], axis=1)
    return VoxelBlock(block.index, block.origin, block.small, block.occupancy, block.point_ids,
                      block.cells, grid.reshape(block.dims))


def point_labels_from_voxels(block: VoxelBlock) -> np.ndarray:
    """Label of each member point's cell, aligned with ``block.point_ids``."""
    if block.labels is None:
        raise ValueError(f"block {block.index} has no voxel labels")
    lab = block.labels[block.cells[:, 0], block.cells[:, 1], block.cells[:, 2]]
    if np.any(lab < 0):
        raise ValueError(f"block {block.index} has unlabeled occupied cells")
    return lab.astype(np.uint8)


# Block dump layout (little-endian):
#   magic b"VXB1" | dims 3*u32 | block index 3*i32 | origin 3*f64 | small size 3*f64
#   | occupancy bits, C order, np.packbits bitorder="little"
_DUMP_HEAD = struct.Struct("<4s3I3i3d3d")


def dump_block(block: VoxelBlock) -> bytes:
    head = _DUMP_HEAD.pack(b"VXB1", *block.dims, *block.index, *block.origin, *block.small)
    return head + np.packbits(block.occupancy.ravel() > 0, bitorder="little").tobytes()


def load_block_dump(data: bytes) -> tuple:
    """Returns ``(index, origin, small, occupancy)`` from :func:`dump_block` bytes."""
    magic, *rest = _DUMP_HEAD.unpack_from(data)
    if magic != b"VXB1":
        raise ValueError("not a voxel block dump")
    dims, index, origin, small = rest[0:3], rest[3:6], rest[6:9], rest[9:12]
    n = dims[0] * dims[1] * dims[2]
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, offset=_DUMP_HEAD.size),
                         bitorder="little")[:n]
    return tuple(index), np.array(origin), np.array(small), bits.reshape(dims).astype(np.uint8)
