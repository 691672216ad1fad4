"""Domain types shared across the pipeline stages."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

DEFAULT_COLOR = (128, 128, 128)


class TerrainClass(IntEnum):
    GROUND = 0
    MANMADE = 1
    VEGETATION = 2


class MaterialClass(IntEnum):
    BARE_SOIL = 0
    ROAD = 1
    VEGETATION = 2


TERRAIN_NAMES = ("Ground", "ManMade", "Vegetation")
MATERIAL_NAMES = ("BareSoil", "Road", "Vegetation")


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    r: int = DEFAULT_COLOR[0]
    g: int = DEFAULT_COLOR[1]
    b: int = DEFAULT_COLOR[2]


@dataclass
class PointCloud:
    """Points as columnar arrays: ``xyz`` (N, 3) float64, ``rgb`` (N, 3) uint8.

    ``labels`` are optional per-point :class:`TerrainClass` codes (uint8).
    """

    xyz: np.ndarray
    rgb: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3))
        n = len(self.xyz)
        if self.rgb is None:
            self.rgb = np.tile(np.array(DEFAULT_COLOR, dtype=np.uint8), (n, 1))
        else:
            rgb = np.asarray(self.rgb)
            if rgb.size and (rgb.min() < 0 or rgb.max() > 255):
                raise ValueError("color channels must lie in [0, 255]")
            self.rgb = np.ascontiguousarray(rgb.astype(np.uint8).reshape(-1, 3))
        if len(self.rgb) != n:
            raise ValueError(f"rgb has {len(self.rgb)} rows, expected {n}")
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise ValueError(f"labels has shape {labels.shape}, expected ({n},)")
            if labels.size and (labels.min() < 0 or labels.max() > 2):
                raise ValueError("labels must be TerrainClass codes 0, 1 or 2")
            self.labels = labels.astype(np.uint8)
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("point coordinates must be finite")

    def __len__(self) -> int:
        return len(self.xyz)

    @classmethod
    def from_points(cls, points: Sequence[Point3], labels=None) -> "PointCloud":
        xyz = np.array([(p.x, p.y, p.z) for p in points], dtype=np.float64).reshape(-1, 3)
        rgb = np.array([(p.r, p.g, p.b) for p in points], dtype=np.int64).reshape(-1, 3)
        return cls(xyz, rgb, labels)

    def point(self, i: int) -> Point3:
        x, y, z = self.xyz[i]
        r, g, b = self.rgb[i]
        return Point3(float(x), float(y), float(z), int(r), int(g), int(b))

    def subset(self, selector) -> "PointCloud":
        """Rows picked by a boolean mask or an index array, labels kept in sync."""
        labels = None if self.labels is None else self.labels[selector]
        return PointCloud(self.xyz[selector], self.rgb[selector], labels)

    def with_labels(self, labels) -> "PointCloud":
        return PointCloud(self.xyz, self.rgb, labels)

    def equals(self, other: "PointCloud") -> bool:
        if len(self) != len(other):
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        same = np.array_equal(self.xyz, other.xyz) and np.array_equal(self.rgb, other.rgb)
        if self.labels is not None:
            same = same and np.array_equal(self.labels, other.labels)
        return bool(same)


@dataclass
class CameraPoseSet:
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)


@dataclass
class Raster:
    """Georeferenced image; ``origin`` is the world position of pixel (0, 0)'s center.

    Row index grows with +y and column index with +x. ``pixels`` is (H, W, 3) for
    color or (H, W) for single-band masks.
    """

    pixels: np.ndarray
    resolution: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("raster resolution must be positive")
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim not in (2, 3) or self.height < 1 or self.width < 1:
            raise ValueError(f"bad raster shape {self.pixels.shape}")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def corner(self) -> tuple:
        """World coordinates of the raster's minimum (x, y) edge."""
        h = 0.5 * self.resolution
        return (self.origin[0] - h, self.origin[1] - h)

    def same_geometry(self, other: "Raster") -> bool:
        return (
            self.width == other.width
            and self.height == other.height
            and np.isclose(self.resolution, other.resolution)
            and np.allclose(self.origin, other.origin)
        )


@dataclass
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise ValueError("face index out of range")
            f = self.faces
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("degenerate face with a repeated vertex index")


@dataclass
class Polygon2:
    """Closed polygon; ``rings[0]`` is the outer boundary, further rings are holes.

    Rings are stored open (the closing vertex is implied).
    """

    rings: list

    def __post_init__(self):
        rings = [np.asarray(r, dtype=np.float64).reshape(-1, 2) for r in self.rings]
        if not rings or len(rings[0]) < 3:
            raise ValueError("polygon needs an outer ring with at least 3 vertices")
        rings = [r[:-1] if len(r) > 3 and np.array_equal(r[0], r[-1]) else r for r in rings]
        self.rings = rings
        if abs(ring_area(rings[0])) <= 0:
            raise ValueError("polygon outer ring has zero area")

    @property
    def outer(self) -> np.ndarray:
        return self.rings[0]

    def area(self) -> float:
        return abs(ring_area(self.rings[0])) - sum(abs(ring_area(r)) for r in self.rings[1:])


def ring_area(ring: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
