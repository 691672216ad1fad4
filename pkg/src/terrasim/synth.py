"""Deterministic synthetic terrain scenes with exact per-point truth."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy import ndimage

from . import kernels
from .core.types import CameraPoseSet, MaterialClass, PointCloud, Raster, TerrainClass, TriMesh

SOIL_RGB = (150, 125, 95)
ROAD_RGB = (62, 62, 66)
ROOF_RGB = (175, 85, 70)
WALL_RGB = (200, 195, 185)
LEAF_RGB = (55, 135, 45)


@dataclass
class Box:
    cx: float
    cy: float
    width: float
    depth: float
    height: float


@dataclass
class BlobTree:
    cx: float
    cy: float
    crown_radius: float
    crown_half_height: float
    crown_base: float


@dataclass
class Road:
    y0: float
    y1: float


@dataclass
class SceneSpec:
    size: tuple = (60.0, 60.0)
    slope: tuple = (0.0, 0.0)
    spacing: float = 0.25
    boxes: List[Box] = field(default_factory=list)
    trees: List[BlobTree] = field(default_factory=list)
    roads: List[Road] = field(default_factory=list)
    underground_noise: int = 0
    leaf_density: float = 30.0
    camera_spacing: float = 9.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        data = dict(data)
        data["boxes"] = [Box(**b) for b in data.get("boxes", [])]
        data["trees"] = [BlobTree(**t) for t in data.get("trees", [])]
        data["roads"] = [Road(**r) for r in data.get("roads", [])]
        for key in ("size", "slope"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class SynthScene:
    cloud: PointCloud
    dsm: PointCloud
    truth: np.ndarray
    noise_mask: np.ndarray
    ortho: Raster
    mask: Raster
    mesh: TriMesh
    cameras: CameraPoseSet
    spec: SceneSpec
    emitted: dict


def default_scene_spec(seed: int = 0, slope=(0.0, 0.0), underground_noise: int = 500) -> SceneSpec:
    """Plane with one road strip, two buildings and blob trees in a 3x2 slot layout."""
    rng = np.random.default_rng(seed)
    slots = [(x, y) for y in (12.0, 48.0) for x in (10.0, 30.0, 50.0)]
    order = rng.permutation(len(slots))
    boxes, trees = [], []
    for n, s in enumerate(order):
        sx, sy = slots[s]
        sx += rng.uniform(-1.5, 1.5)
        sy += rng.uniform(-1.5, 1.5)
        if n < 2:
            boxes.append(Box(round(sx, 3), round(sy, 3), round(rng.uniform(10, 13), 3),
                             round(rng.uniform(10, 13), 3), round(rng.uniform(5, 8), 3)))
        else:
            for _ in range(int(rng.integers(1, 3))):
                trees.append(BlobTree(round(sx + rng.uniform(-3.5, 3.5), 3),
                                      round(sy + rng.uniform(-3.5, 3.5), 3),
                                      round(rng.uniform(1.8, 3.0), 3),
                                      round(rng.uniform(1.5, 2.5), 3),
                                      round(rng.uniform(2.0, 3.5), 3)))
    return SceneSpec(slope=tuple(slope), boxes=boxes, trees=trees, roads=[Road(27.0, 33.0)],
                     underground_noise=underground_noise, seed=seed)


def _ground_z(spec: SceneSpec, x, y):
    return spec.slope[0] * np.asarray(x) + spec.slope[1] * np.asarray(y)


def _in_box(b: Box, x, y, pad=0.0):
    return (np.abs(x - b.cx) <= b.width / 2 + pad) & (np.abs(y - b.cy) <= b.depth / 2 + pad)


def _on_road(spec: SceneSpec, y):
    on = np.zeros(np.shape(y), dtype=bool)
    for r in spec.roads:
        on |= (y >= r.y0) & (y <= r.y1)
    return on


def _jitter_color(rng, base, sigma, n):
    return np.clip(np.array(base) + rng.normal(0, sigma, (n, 3)), 0, 255).astype(np.uint8)


def _surface_grid(u0, u1, v0, v1, step):
    nu = max(2, int(round((u1 - u0) / step)) + 1)
    nv = max(2, int(round((v1 - v0) / step)) + 1)
    u, v = np.meshgrid(np.linspace(u0, u1, nu), np.linspace(v0, v1, nv), indexing="ij")
    return u.ravel(), v.ravel()


def synth_scene(seed: int = 0, spec: Optional[SceneSpec] = None) -> SynthScene:
    spec = spec or default_scene_spec(seed)
    rng = np.random.default_rng(seed)
    W, D = spec.size
    h = spec.spacing
    parts_xyz, parts_rgb, parts_lab = [], [], []
    emitted = {"ground": 0, "manmade": 0, "vegetation": 0, "noise": 0}

    # ground plane on a jittered grid, skipping building footprints
    gx, gy = _surface_grid(0.0, W, 0.0, D, h)
    gx = np.clip(gx + rng.uniform(-0.3, 0.3, gx.size) * h, 0.0, W)
    gy = np.clip(gy + rng.uniform(-0.3, 0.3, gy.size) * h, 0.0, D)
    keep = np.ones(gx.size, dtype=bool)
    for b in spec.boxes:
        keep &= ~_in_box(b, gx, gy)
    gx, gy = gx[keep], gy[keep]
    road = _on_road(spec, gy)
    rgb = _jitter_color(rng, SOIL_RGB, 14, gx.size)
    rgb[road] = _jitter_color(rng, ROAD_RGB, 3, int(road.sum()))
    parts_xyz.append(np.column_stack([gx, gy, _ground_z(spec, gx, gy)]))
    parts_rgb.append(rgb)
    parts_lab.append(np.full(gx.size, TerrainClass.GROUND))
    emitted["ground"] = gx.size

    for b in spec.boxes:
        x0, x1 = b.cx - b.width / 2, b.cx + b.width / 2
        y0, y1 = b.cy - b.depth / 2, b.cy + b.depth / 2
        base = float(_ground_z(spec, b.cx, b.cy))
        top = base + b.height
        pts = []
        u, v = _surface_grid(x0, x1, y0, y1, h)
        pts.append((np.column_stack([u, v, np.full(u.size, top)]), ROOF_RGB))
        for fixed, lo, hi, axis in ((x0, y0, y1, 0), (x1, y0, y1, 0), (y0, x0, x1, 1), (y1, x0, x1, 1)):
            u, t = _surface_grid(lo, hi, 0.0, b.height, h)
            if axis == 0:
                xs, ys = np.full(u.size, fixed), u
            else:
                xs, ys = u, np.full(u.size, fixed)
            zs = _ground_z(spec, xs, ys) + t
            zs = np.minimum(zs, top)
            pts.append((np.column_stack([xs, ys, zs]), WALL_RGB))
        for xyz, color in pts:
            parts_xyz.append(xyz)
            parts_rgb.append(_jitter_color(rng, color, 6, len(xyz)))
            parts_lab.append(np.full(len(xyz), TerrainClass.MANMADE))
            emitted["manmade"] += len(xyz)

    for t in spec.trees:
        volume = 4.0 / 3.0 * np.pi * t.crown_radius ** 2 * t.crown_half_height
        n = max(1, int(round(volume * spec.leaf_density)))
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = rng.uniform(0, 1, n) ** (1 / 3)
        local = d * rad[:, None] * np.array([t.crown_radius, t.crown_radius, t.crown_half_height])
        cz = float(_ground_z(spec, t.cx, t.cy)) + t.crown_base + t.crown_half_height
        xyz = local + np.array([t.cx, t.cy, cz])
        parts_xyz.append(xyz)
        parts_rgb.append(_jitter_color(rng, LEAF_RGB, 35, n))
        parts_lab.append(np.full(n, TerrainClass.VEGETATION))
        emitted["vegetation"] += n

    xyz = np.concatenate(parts_xyz)
    rgb = np.concatenate(parts_rgb)
    lab = np.concatenate(parts_lab).astype(np.uint8)
    surface = PointCloud(xyz, rgb, lab)
    dsm = dsm_from_cloud(surface, cell=1.0)

    noise_xyz = np.zeros((0, 3))
    if spec.underground_noise:
        nx = rng.uniform(1.0, W - 1.0, spec.underground_noise)
        ny = rng.uniform(1.0, D - 1.0, spec.underground_noise)
        floor = kernels.cylinder_min_z(np.column_stack([nx, ny]), dsm.xyz, 5.0)
        nz = floor - rng.uniform(0.3, 2.5, spec.underground_noise)
        noise_xyz = np.column_stack([nx, ny, nz])
        emitted["noise"] = len(noise_xyz)
    cloud = PointCloud(
        np.concatenate([xyz, noise_xyz]),
        np.concatenate([rgb, _jitter_color(rng, SOIL_RGB, 20, len(noise_xyz))]),
        np.concatenate([lab, np.full(len(noise_xyz), TerrainClass.GROUND, dtype=np.uint8)]),
    )
    noise_mask = np.r_[np.zeros(len(xyz), dtype=bool), np.ones(len(noise_xyz), dtype=bool)]

    ortho, mask = render_ortho(surface, spec, resolution=0.25)
    mesh = heightfield_mesh(surface, spec, step=0.5)
    cameras = camera_grid(spec)
    return SynthScene(cloud, dsm, cloud.labels.copy(), noise_mask, ortho, mask, mesh, cameras,
                      spec, emitted)


def dsm_from_cloud(cloud: PointCloud, cell: float = 1.0) -> PointCloud:
    """One sample per occupied XY cell: the cell center at the cell's max z."""
    xy = cloud.xyz[:, :2]
    origin = np.floor(xy.min(axis=0) / cell) * cell
    ij = np.floor((xy - origin) / cell).astype(np.int64)
    dims = ij.max(axis=0) + 1
    flat = ij[:, 0] * dims[1] + ij[:, 1]
    zmax = np.full(dims[0] * dims[1], -np.inf)
    np.maximum.at(zmax, flat, cloud.xyz[:, 2])
    cells = np.flatnonzero(np.isfinite(zmax))
    ci, cj = np.divmod(cells, dims[1])
    centers = origin + (np.column_stack([ci, cj]) + 0.5) * cell
    return PointCloud(np.column_stack([centers, zmax[cells]]))


def render_ortho(surface: PointCloud, spec: SceneSpec, resolution: float = 0.25):
    """Top-down z-buffered color raster and the matching material mask."""
    W, D = spec.size
    nx = int(round(W / resolution))
    ny = int(round(D / resolution))
    col = np.clip(np.floor(surface.xyz[:, 0] / resolution).astype(np.int64), 0, nx - 1)
    row = np.clip(np.floor(surface.xyz[:, 1] / resolution).astype(np.int64), 0, ny - 1)
    order = np.argsort(surface.xyz[:, 2], kind="stable")
    pixels = np.zeros((ny, nx, 3), dtype=np.uint8)
    top_label = np.full((ny, nx), 255, dtype=np.uint8)
    filled = np.zeros((ny, nx), dtype=bool)
    # later (higher) points overwrite earlier ones
    pixels[row[order], col[order]] = surface.rgb[order]
    top_label[row[order], col[order]] = surface.labels[order]
    filled[row[order], col[order]] = True
    if not filled.all():
        _, (ri, ci) = ndimage.distance_transform_edt(~filled, return_indices=True)
        pixels = pixels[ri, ci]
        top_label = top_label[ri, ci]
    yc = (np.arange(ny) + 0.5) * resolution
    codes = np.full((ny, nx), MaterialClass.BARE_SOIL, dtype=np.uint8)
    codes[_on_road(spec, yc), :] = MaterialClass.ROAD
    codes[top_label == TerrainClass.VEGETATION] = MaterialClass.VEGETATION
    origin = (0.5 * resolution, 0.5 * resolution)
    return Raster(pixels, resolution, origin), Raster(codes, resolution, origin)


def heightfield_mesh(surface: PointCloud, spec: SceneSpec, step: float = 0.5) -> TriMesh:
    """2.5D surface mesh on a regular grid; node z is the highest point in its cell."""
    W, D = spec.size
    nx = int(round(W / step)) + 1
    ny = int(round(D / step)) + 1
    gi = np.clip(np.round(surface.xyz[:, 0] / step).astype(np.int64), 0, nx - 1)
    gj = np.clip(np.round(surface.xyz[:, 1] / step).astype(np.int64), 0, ny - 1)
    zmax = np.full((nx, ny), -np.inf)
    np.maximum.at(zmax, (gi, gj), surface.xyz[:, 2])
    xs, ys = np.meshgrid(np.arange(nx) * step, np.arange(ny) * step, indexing="ij")
    z = np.where(np.isfinite(zmax), zmax, _ground_z(spec, xs, ys))
    verts = np.column_stack([xs.ravel(), ys.ravel(), z.ravel()])
    idx = np.arange(nx * ny).reshape(nx, ny)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriMesh(verts, faces)


def camera_grid(spec: SceneSpec, altitude: float = 80.0, margin: float = 3.0) -> CameraPoseSet:
    W, D = spec.size
    xs = np.arange(margin, W - margin + 1e-9, spec.camera_spacing)
    ys = np.arange(margin, D - margin + 1e-9, spec.camera_spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    n = gx.size
    return CameraPoseSet(np.column_stack([gx.ravel(), gy.ravel(), np.full(n, altitude)]))
