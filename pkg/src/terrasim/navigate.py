"""Material-weighted 8-connected grid graph and A* shortest paths."""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .core.types import MaterialClass
from .materials import MaterialVectorMap

DEFAULT_WEIGHTS = {MaterialClass.BARE_SOIL: 1.0, MaterialClass.ROAD: 0.2,
                   MaterialClass.VEGETATION: 1.0}
_MOVES = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


@dataclass
class NavGrid:
    """Cell (i, j) covers x in [origin_x + i*cell, +cell), y likewise; weights[i, j]."""

    origin: tuple
    cell: float
    weights: np.ndarray
    passable: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.size == 0:
            raise ValueError("navigation grid needs a non-empty 2D weight array")
        if np.any(~(self.weights > 0)):
            raise ValueError("cell weights must be positive")
        if self.passable is None:
            self.passable = np.ones(self.weights.shape, dtype=bool)
        self.passable = np.asarray(self.passable, dtype=bool)
        if self.passable.shape != self.weights.shape:
            raise ValueError("passable mask shape differs from weights")

    @property
    def shape(self) -> tuple:
        return self.weights.shape

    def cell_of(self, x: float, y: float) -> tuple:
        i = int(math.floor((x - self.origin[0]) / self.cell))
        j = int(math.floor((y - self.origin[1]) / self.cell))
        return i, j

    def center(self, cell) -> tuple:
        return (self.origin[0] + (cell[0] + 0.5) * self.cell,
                self.origin[1] + (cell[1] + 0.5) * self.cell)

    def inside(self, cell) -> bool:
        return 0 <= cell[0] < self.shape[0] and 0 <= cell[1] < self.shape[1]


@dataclass
class PathResult:
    cells: list
    cost: float
    length: float
    found: bool = True
    expanded: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"found": self.found, "cells": [list(c) for c in self.cells],
                "cost_m_weighted": self.cost, "length_m": self.length}


def build_navgrid(extent, material_map: Optional[MaterialVectorMap] = None, weights=None,
                  cell: float = 1.0, lookup_radius: float = 3.0) -> NavGrid:
    """Weight each cell by the class of the nearest map sample within ``lookup_radius``."""
    xmin, ymin, xmax, ymax = (float(v) for v in extent)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("navigation extent is empty")
    if cell <= 0:
        raise ValueError("cell size must be positive")
    table = dict(DEFAULT_WEIGHTS)
    if weights:
        table.update({MaterialClass(int(k)): float(v) for k, v in weights.items()})
    for k, v in table.items():
        if not v > 0:
            raise ValueError(f"weight for {MaterialClass(k).name} must be positive, got {v}")
    nx = max(1, int(math.ceil((xmax - xmin) / cell - 1e-9)))
    ny = max(1, int(math.ceil((ymax - ymin) / cell - 1e-9)))
    w = np.ones((nx, ny), dtype=np.float64)
    if material_map is not None and len(material_map):
        gx, gy = np.meshgrid(xmin + (np.arange(nx) + 0.5) * cell,
                             ymin + (np.arange(ny) + 0.5) * cell, indexing="ij")
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        tree = cKDTree(material_map.xy)
        dist, idx = tree.query(centers, k=1)
        # equidistant samples resolve to the lowest sample index
        near = dist <= lookup_radius
        for q in np.flatnonzero(near):
            cands = tree.query_ball_point(centers[q], dist[q] * (1 + 1e-9) + 1e-12)
            if len(cands) > 1:
                cands = np.asarray(cands)
                d2 = np.sum((material_map.xy[cands] - centers[q]) ** 2, axis=1)
                idx[q] = cands[d2 == d2.min()].min()
        lut = np.array([table[MaterialClass(c)] for c in range(3)])
        flat = w.ravel()
        flat[near] = lut[material_map.codes[idx[near]]]
        w = flat.reshape(nx, ny)
    return NavGrid((xmin, ymin), float(cell), w)


def _step(grid: NavGrid, a, b) -> float:
    diag = a[0] != b[0] and a[1] != b[1]
    length = grid.cell * (math.sqrt(2.0) if diag else 1.0)
    return length * 0.5 * (grid.weights[a] + grid.weights[b])


def path_cost(grid: NavGrid, cells) -> tuple:
    """(weighted cost, Euclidean length) of a cell sequence."""
    cost = length = 0.0
    for a, b in zip(cells[:-1], cells[1:]):
        cost += _step(grid, tuple(a), tuple(b))
        length += grid.cell * math.hypot(a[0] - b[0], a[1] - b[1])
    return cost, length


def astar(grid: NavGrid, start, goal, record_expanded: bool = False) -> PathResult:
    """Minimum-cost 8-connected path; edge cost = step length x mean endpoint weight."""
    start, goal = tuple(int(v) for v in start), tuple(int(v) for v in goal)
    for name, c in (("start", start), ("goal", goal)):
        if not grid.inside(c):
            raise ValueError(f"{name} cell {c} lies outside the grid {grid.shape}")
        if not grid.passable[c]:
            raise ValueError(f"{name} cell {c} is not passable")
    if start == goal:
        return PathResult([start], 0.0, 0.0)
    wmin = float(grid.weights[grid.passable].min())
    nx, ny = grid.shape
    gx, gy = goal

    def h(c):
        return wmin * grid.cell * math.hypot(c[0] - gx, c[1] - gy)

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    heap = [(h(start), 0, start)]
    tie = 0
    expanded = []
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        closed.add(cur)
        if record_expanded:
            expanded.append(cur)
        if cur == goal:
            cells = []
            node = cur
            while node is not None:
                cells.append(node)
                node = parent[node]
            cells.reverse()
            _, length = path_cost(grid, cells)
            return PathResult(cells, g[cur], length, True, expanded)
        gc = g[cur]
        for dx, dy in _MOVES:
            nb = (cur[0] + dx, cur[1] + dy)
            if not (0 <= nb[0] < nx and 0 <= nb[1] < ny) or nb in closed or not grid.passable[nb]:
                continue
            cand = gc + _step(grid, cur, nb)
            if cand < g.get(nb, math.inf):
                g[nb] = cand
                parent[nb] = cur
                tie += 1
                heapq.heappush(heap, (cand + h(nb), tie, nb))
    return PathResult([], math.inf, math.inf, False, expanded)


def write_path(result: PathResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2)


def write_pgm(grid: NavGrid, path, result: Optional[PathResult] = None) -> None:
    """Binary PGM of the weights (dark = cheap) with the path drawn white; north up."""
    w = grid.weights
    img = np.clip(40 + 160 * (w - w.min()) / max(np.ptp(w), 1e-12), 0, 255).astype(np.uint8)
    if result is not None:
        for c in result.cells:
            img[c] = 255
    rows = np.ascontiguousarray(img.T[::-1])
    with open(path, "wb") as fh:
        fh.write(f"P5\n{rows.shape[1]} {rows.shape[0]}\n255\n".encode("ascii"))
        fh.write(rows.tobytes())
