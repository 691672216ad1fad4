"""Underground artifact removal against a DSM and cropping to the camera AOI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, Delaunay, QhullError

from . import kernels
from .core.types import CameraPoseSet, PointCloud, Polygon2, ring_area


@dataclass(frozen=True)
class CleaningParams:
    radius: float = 5.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cleaning radius must be positive")


@dataclass(frozen=True)
class AoiParams:
    alpha: float = 30.0
    fallback_convex: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def underground_mask(cloud: PointCloud, dsm: PointCloud, params: CleaningParams = CleaningParams(),
                     backend=None) -> np.ndarray:
    """True where a point lies below the lowest DSM sample inside its vertical cylinder."""
    if len(dsm) == 0:
        raise ValueError("DSM is empty")
    floor = kernels.cylinder_min_z(cloud.xyz[:, :2], dsm.xyz, params.radius, backend=backend)
    # an empty cylinder gives +inf; such points are kept via the isfinite guard
    return np.isfinite(floor) & (cloud.xyz[:, 2] < floor)


def remove_underground(cloud: PointCloud, dsm: PointCloud, params: CleaningParams = CleaningParams(),
                       backend=None):
    """Drop underground artifacts; returns ``(kept_cloud, removed_count)`` in input order."""
    noise = underground_mask(cloud, dsm, params, backend=backend)
    return cloud.subset(~noise), int(noise.sum())


def _convex_polygon(xy: np.ndarray) -> Polygon2:
    hull = ConvexHull(xy)
    return Polygon2([xy[hull.vertices]])


def _alpha_outer_ring(xy: np.ndarray, alpha: float):
    """Outer boundary of the alpha shape, or None when it is empty, split or pinched."""
    try:
        tri = Delaunay(xy)
    except QhullError:
        return None
    simp = tri.simplices
    a, b, c = xy[simp[:, 0]], xy[simp[:, 1]], xy[simp[:, 2]]
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(a - c, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    area2 = np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        circum = la * lb * lc / (2.0 * area2)
    keep = np.isfinite(circum) & (circum <= alpha)
    kept = simp[keep]
    if len(kept) == 0:
        return None
    # every camera must belong to some kept triangle
    if len(np.unique(kept)) != len(xy):
        return None

    edges = np.sort(np.concatenate([kept[:, [0, 1]], kept[:, [1, 2]], kept[:, [2, 0]]]), axis=1)
    tri_of_edge = np.tile(np.arange(len(kept)), 3)
    uniq, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()

    # kept triangles must form one edge-connected component
    parent = list(range(len(kept)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    shared = np.nonzero(counts == 2)[0]
    order = np.argsort(inverse, kind="stable")
    first = np.searchsorted(inverse[order], shared)
    for e, f in zip(shared, first):
        t1, t2 = tri_of_edge[order[f]], tri_of_edge[order[f + 1]]
        r1, r2 = find(t1), find(t2)
        if r1 != r2:
            parent[r1] = r2
    if len({find(i) for i in range(len(kept))}) != 1:
        return None

    boundary = uniq[counts == 1]
    adj = {}
    for u, v in boundary:
        adj.setdefault(int(u), []).append(int(v))
        adj.setdefault(int(v), []).append(int(u))
    if any(len(n) != 2 for n in adj.values()):
        return None  # pinched boundary

    rings = []
    unvisited = set(adj)
    while unvisited:
        start = min(unvisited)
        ring = [start]
        prev, cur = None, start
        while True:
            unvisited.discard(cur)
            n0, n1 = adj[cur]
            nxt = n0 if n0 != prev else n1
            if nxt == start:
                break
            ring.append(nxt)
            prev, cur = cur, nxt
        rings.append(xy[ring])
    outer = max(rings, key=lambda r: abs(ring_area(r)))
    if ring_area(outer) < 0:
        outer = outer[::-1]
    return outer


def compute_aoi(cameras: CameraPoseSet, params: AoiParams = AoiParams()) -> Polygon2:
    """Alpha-shape outer boundary of the XY-projected cameras (convex hull fallback)."""
    pos = np.asarray(cameras.positions if isinstance(cameras, CameraPoseSet) else cameras,
                     dtype=np.float64)
    xy = np.unique(pos.reshape(-1, pos.shape[-1])[:, :2], axis=0)
    if len(xy) < 3:
        raise ValueError(f"AOI needs at least 3 distinct camera positions, got {len(xy)}")
    centered = xy - xy.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise ValueError("camera positions are collinear")
    ring = _alpha_outer_ring(xy, params.alpha)
    if ring is not None:
        poly = Polygon2([ring])
        if point_in_polygon(xy, poly).all():
            return poly
    if not params.fallback_convex:
        raise ValueError(f"alpha shape with alpha={params.alpha} is degenerate or disconnected")
    return _convex_polygon(xy)


def point_in_polygon(xy, polygon: Polygon2, tol: float = 1e-9) -> np.ndarray:
    """Even-odd inside test over all rings, with points on any edge counted inside."""
    pts = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    px, py = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    for ring in polygon.rings:
        nxt = np.roll(ring, -1, axis=0)
        for (ax, ay), (bx, by) in zip(ring, nxt):
            crosses = (ay > py) != (by > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xcross = (bx - ax) * (py - ay) / (by - ay) + ax
            inside ^= crosses & (px < xcross)
            ex, ey = bx - ax, by - ay
            length = np.hypot(ex, ey)
            cross = ex * (py - ay) - ey * (px - ax)
            scale = max(length, 1.0)
            on_line = np.abs(cross) <= tol * scale * max(length, 1.0)
            within = ((px >= min(ax, bx) - tol * scale) & (px <= max(ax, bx) + tol * scale)
                      & (py >= min(ay, by) - tol * scale) & (py <= max(ay, by) + tol * scale))
            on_edge |= on_line & within
    return inside | on_edge


def crop_to_aoi(cloud: PointCloud, aoi: Polygon2) -> PointCloud:
    return cloud.subset(point_in_polygon(cloud.xyz[:, :2], aoi))
