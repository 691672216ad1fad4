"""Tree instance extraction from Vegetation points and geo-typical species matching."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import List, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import Delaunay, QhullError, cKDTree

from .core.ground import GroundElevationModel
from .core.types import PointCloud, TerrainClass

FOOTPRINT_CELL = 0.5
MAX_RGB_DISTANCE = 441.673  # sqrt(3) * 255


@dataclass
class VegCluster:
    members: np.ndarray
    footprint: np.ndarray
    avg_height: float
    cell: float = FOOTPRINT_CELL

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class TreeInstance:
    x: float
    y: float
    height: float
    width: float
    color: tuple
    species_id: Optional[int] = None
    species_name: Optional[str] = None
    points: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["color"] = list(self.color)
        return d


@dataclass(frozen=True)
class TreeModelAttribute:
    species_id: int
    name: str
    h_min: float
    h_max: float
    leaf: tuple
    zone_min: int
    zone_max: int
    asset: str = ""

    def __post_init__(self):
        if self.h_min > self.h_max or self.zone_min > self.zone_max:
            raise ValueError(f"species {self.species_id}: range minimum exceeds maximum")


def connected_components(points, link: float = 1.0) -> List[np.ndarray]:
    """Maximal groups of points chained by 3D gaps <= ``link``, largest first."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return []
    pairs = cKDTree(pts).query_pairs(link, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = _cc(graph, directed=False)
    groups = [np.flatnonzero(comp == c) for c in range(comp.max() + 1)]
    groups.sort(key=lambda g: (-len(g), g[0]))
    return groups


def footprint_cells(xy, cell: float = FOOTPRINT_CELL) -> np.ndarray:
    return np.unique(np.floor(np.asarray(xy) / cell).astype(np.int64), axis=0)


def make_cluster(cloud: PointCloud, members, ground_model: Optional[GroundElevationModel] = None,
                 cell: float = FOOTPRINT_CELL) -> VegCluster:
    members = np.asarray(members, dtype=np.int64)
    if len(members) == 0:
        raise ValueError("a vegetation cluster needs at least one point")
    if cloud.labels is not None and np.any(cloud.labels[members] != TerrainClass.VEGETATION):
        raise ValueError("cluster members must all be labeled Vegetation")
    xyz = cloud.xyz[members]
    ground = 0.0 if ground_model is None else ground_model.elevation_at(xyz[:, 0], xyz[:, 1])
    return VegCluster(members, footprint_cells(xyz[:, :2], cell), float(np.mean(xyz[:, 2] - ground)),
                      cell)


def coverage_area(xy, max_edge: float = 2.0) -> float:
    """Area of the XY Delaunay triangulation after dropping triangles with an edge > ``max_edge``."""
    pts = np.unique(np.asarray(xy, dtype=np.float64).reshape(-1, np.shape(xy)[-1])[:, :2], axis=0)
    if len(pts) < 3:
        return 0.0
    try:
        tri = Delaunay(pts)
    except QhullError:
        return 0.0
    a, b, c = (pts[tri.simplices[:, i]] for i in range(3))
    longest = np.max(np.stack([np.linalg.norm(a - b, axis=1), np.linalg.norm(b - c, axis=1),
                               np.linalg.norm(c - a, axis=1)]), axis=0)
    area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                        - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    return float(area[longest <= max_edge].sum())


def crown_diameter(height: float, c: float = 0.5, d_min: float = 2.0, d_max: float = 15.0) -> float:
    return min(max(c * height, d_min), d_max)


def estimate_tree_count(area: float, avg_height: float, c: float = 0.5, d_min: float = 2.0,
                        d_max: float = 15.0) -> int:
    if area < 0 or not avg_height > 0:
        raise ValueError("area must be >= 0 and height > 0")
    d = crown_diameter(avg_height, c, d_min, d_max)
    return max(1, int(round(area / (math.pi * (d / 2) ** 2))))


def _bridson(cells: np.ndarray, cell: float, radius: float, rng, k: int = 30) -> np.ndarray:
    """Dart-throwing Poisson-disc samples restricted to the union of mask cells."""
    inside = set(map(tuple, cells.tolist()))
    bg = radius / math.sqrt(2.0)
    grid = {}
    samples = []
    r2 = radius * radius

    def in_mask(p):
        return (math.floor(p[0] / cell), math.floor(p[1] / cell)) in inside

    def fits(p):
        gi, gj = math.floor(p[0] / bg), math.floor(p[1] / bg)
        for di in range(-2, 3):
            for dj in range(-2, 3):
                q = grid.get((gi + di, gj + dj))
                if q is not None:
                    dx, dy = samples[q][0] - p[0], samples[q][1] - p[1]
                    if dx * dx + dy * dy < r2:
                        return False
        return True

    def add(p):
        grid[(math.floor(p[0] / bg), math.floor(p[1] / bg))] = len(samples)
        samples.append(p)

    # seed every mask cell that is still reachable, growing from each accepted seed
    for ci in rng.permutation(len(cells)):
        cx, cy = cells[ci]
        p = ((cx + rng.random()) * cell, (cy + rng.random()) * cell)
        if not (in_mask(p) and fits(p)):
            continue
        add(p)
        active = [len(samples) - 1]
        while active:
            a = int(rng.integers(len(active)))
            base = samples[active[a]]
            for _ in range(k):
                rho = radius * math.sqrt(1.0 + 3.0 * rng.random())
                theta = 2.0 * math.pi * rng.random()
                q = (base[0] + rho * math.cos(theta), base[1] + rho * math.sin(theta))
                if in_mask(q) and fits(q):
                    add(q)
                    active.append(len(samples) - 1)
                    break
            else:
                active[a] = active[-1]
                active.pop()
    return np.array(samples, dtype=np.float64).reshape(-1, 2)


def poisson_disc_place(footprint, n: int, seed: int = 0, cell: float = FOOTPRINT_CELL,
                       max_steps: int = 12):
    """Place about ``n`` mutually distant points inside the footprint mask.

    The disc radius is bisected (geometrically) until the sample count is within
    [0.8n, 1.2n] or ``max_steps`` is reached. If no radius lands in the band,
    the smallest oversized sample set is thinned to ``n`` points.
    Returns ``(locations, radius)``.
    """
    cells = np.asarray(footprint, dtype=np.int64).reshape(-1, 2)
    if len(cells) == 0:
        raise ValueError("footprint mask is empty")
    n = max(1, int(n))
    if len(cells) == 1:
        return (cells.astype(np.float64) + 0.5) * cell, 0.0
    span = (cells.max(axis=0) - cells.min(axis=0) + 1) * cell
    hi = float(np.hypot(*span)) * 1.01
    lo = cell * 0.05
    r = min(hi * 0.999, math.sqrt(len(cells) * cell * cell / n))
    best = None
    over = None  # smallest sample set with at least n points
    for _ in range(max_steps):
        pts = _bridson(cells, cell, r, np.random.default_rng(seed))
        miss = abs(len(pts) - n)
        if best is None or miss < best[0]:
            best = (miss, pts, r)
        if len(pts) >= n and (over is None or len(pts) < len(over[0])):
            over = (pts, r)
        if 0.8 * n <= len(pts) <= 1.2 * n:
            break
        if len(pts) > n:
            lo = r
        else:
            hi = r
        r = math.sqrt(lo * hi)
    pts, r = best[1], best[2]
    if not 0.8 * n <= len(pts) <= 1.2 * n and over is not None:
        # the count is a step function of r; a subset keeps the min-distance property
        pts, r = _farthest_subset(over[0], n), over[1]
    return pts, r


def _farthest_subset(pts: np.ndarray, n: int) -> np.ndarray:
    """Greedy farthest-point selection of ``n`` rows, starting from row 0."""
    chosen = [0]
    d = np.sum((pts - pts[0]) ** 2, axis=1)
    while len(chosen) < n:
        i = int(np.argmax(d))
        chosen.append(i)
        d = np.minimum(d, np.sum((pts - pts[i]) ** 2, axis=1))
    return pts[np.sort(chosen)]


def kmeans_place(xy, k: int, seed: int = 0, tol: float = 1e-4, max_iter: int = 100) -> np.ndarray:
    """k-means++ seeding followed by Lloyd iterations on XY."""
    pts = np.asarray(xy, dtype=np.float64).reshape(len(xy), -1)[:, :2]
    n = len(pts)
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centers = np.empty((k, 2))
    centers[0] = pts[rng.integers(n)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        j = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[i] = pts[j]
        d2 = np.minimum(d2, np.sum((pts - centers[i]) ** 2, axis=1))
    for _ in range(max_iter):
        assign = np.argmin(((pts[:, None, :] - centers[None]) ** 2).sum(-1), axis=1)
        new = centers.copy()
        for i in range(k):
            sel = assign == i
            if sel.any():
                new[i] = pts[sel].mean(axis=0)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    return centers


def kmeans_inertia(xy, centers) -> float:
    pts = np.asarray(xy, dtype=np.float64)[:, :2]
    return float(((pts[:, None, :] - centers[None]) ** 2).sum(-1).min(axis=1).sum())


def extract_tree_features(cloud: PointCloud, cluster: VegCluster, locations,
                          ground_model: Optional[GroundElevationModel] = None,
                          min_width: float = FOOTPRINT_CELL) -> List[TreeInstance]:
    """Split cluster points by nearest location and measure each tree.

    Width is floored at ``min_width`` so single-column trees stay positive;
    trees with no points or non-positive height are dropped.
    """
    locs = np.asarray(locations, dtype=np.float64).reshape(-1, 2)
    if len(locs) == 0:
        raise ValueError("need at least one tree location")
    xyz = cloud.xyz[cluster.members]
    rgb = cloud.rgb[cluster.members].astype(np.float64)
    assign = np.argmin(((xyz[:, None, :2] - locs[None]) ** 2).sum(-1), axis=1)
    trees = []
    for i, (x, y) in enumerate(locs):
        sel = assign == i
        if not sel.any():
            continue
        p = xyz[sel]
        ground = 0.0 if ground_model is None else float(ground_model.elevation_at(x, y))
        height = float(p[:, 2].max() - ground)
        if height <= 0:
            continue
        extent = p[:, :2].max(axis=0) - p[:, :2].min(axis=0)
        width = max(float(extent.max()), min_width)
        color = tuple(float(c) for c in rgb[sel].mean(axis=0))
        trees.append(TreeInstance(float(x), float(y), height, width, color, points=int(sel.sum())))
    return trees


def species_score(tree: TreeInstance, entry: TreeModelAttribute) -> float:
    if entry.h_min <= tree.height <= entry.h_max:
        h_term = 0.0
    else:
        gap = entry.h_min - tree.height if tree.height < entry.h_min else tree.height - entry.h_max
        h_term = min(gap / 10.0, 1.0)
    c_term = float(np.linalg.norm(np.subtract(tree.color, entry.leaf))) / MAX_RGB_DISTANCE
    return 0.5 * h_term + 0.5 * c_term


def match_species(tree: TreeInstance, table, zone: int) -> int:
    """Closest zone-compatible species by height and leaf color (all entries if none fit)."""
    table = list(table)
    if not table:
        raise ValueError("tree attribute table is empty")
    candidates = [e for e in table if e.zone_min <= zone <= e.zone_max] or table
    best = min(candidates, key=lambda e: (species_score(tree, e), e.species_id))
    return best.species_id


def zone_from_latitude(latitude: float) -> int:
    """Placeholder hardiness-zone lookup by 10-degree latitude band."""
    band = int(abs(latitude) // 10)
    return max(1, min(13, 13 - 2 * band))


TABLE_FIELDS = ["species_id", "name", "h_min", "h_max", "leaf_r", "leaf_g", "leaf_b",
                "zone_min", "zone_max", "asset"]


def read_tree_table(path=None) -> List[TreeModelAttribute]:
    """Parse a species CSV; with no path, the bundled default table."""
    if path is None:
        text = resources.files("terrasim").joinpath("data/trees.csv").read_text(encoding="utf-8")
        rows = list(csv.DictReader(text.splitlines()))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    table = []
    for line, row in enumerate(rows, start=2):
        missing = [f for f in TABLE_FIELDS[:-1] if f not in row or row[f] in (None, "")]
        if missing:
            raise ValueError(f"tree table line {line}: missing {', '.join(missing)}")
        table.append(TreeModelAttribute(
            int(row["species_id"]), row["name"], float(row["h_min"]), float(row["h_max"]),
            (float(row["leaf_r"]), float(row["leaf_g"]), float(row["leaf_b"])),
            int(row["zone_min"]), int(row["zone_max"]), row.get("asset") or ""))
    return table


def write_tree_table(table, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_FIELDS)
        for e in table:
            w.writerow([e.species_id, e.name, e.h_min, e.h_max, *e.leaf, e.zone_min, e.zone_max,
                        e.asset])


@dataclass(frozen=True)
class TreeParams:
    link: float = 1.0
    max_edge: float = 2.0
    method: str = "poisson"
    min_points: int = 20
    seed: int = 0


def extract_trees(cloud: PointCloud, ground_model: Optional[GroundElevationModel] = None,
                  table=None, zone: Optional[int] = None,
                  params: TreeParams = TreeParams()) -> List[TreeInstance]:
    """Cluster Vegetation points, place trees per cluster and attach species ids."""
    if cloud.labels is None:
        raise ValueError("tree extraction needs a labeled cloud")
    if params.method not in ("poisson", "kmeans"):
        raise ValueError(f"unknown placement method {params.method!r}")
    veg = np.flatnonzero(cloud.labels == TerrainClass.VEGETATION)
    trees = []
    if len(veg) == 0:
        return trees
    for ci, group in enumerate(connected_components(cloud.xyz[veg], params.link)):
        if len(group) < params.min_points:
            continue
        cluster = make_cluster(cloud, veg[group], ground_model)
        xy = cloud.xyz[cluster.members, :2]
        area = coverage_area(xy, params.max_edge)
        n = estimate_tree_count(area, max(cluster.avg_height, 1e-6))
        cseed = int(np.random.SeedSequence([params.seed, ci]).generate_state(1)[0])
        if params.method == "poisson":
            locs, _ = poisson_disc_place(cluster.footprint, n, seed=cseed, cell=cluster.cell)
        else:
            locs = kmeans_place(xy, min(n, len(xy)), seed=cseed)
        for t in extract_tree_features(cloud, cluster, locs, ground_model):
            if table:
                t.species_id = match_species(t, table, zone if zone is not None else 0)
                t.species_name = next(e.name for e in table if e.species_id == t.species_id)
            trees.append(t)
    return trees
