import itertools

import numpy as np
import pytest
import shapely
from hypothesis import given, settings, strategies as st
from shapely.geometry import Point, Polygon as ShapelyPolygon

from terrasim.core import CameraPoseSet, PointCloud, Polygon2
from terrasim.preprocess import (
    AoiParams, CleaningParams, compute_aoi, crop_to_aoi, point_in_polygon, remove_underground,
    underground_mask,
)


def flat_dsm(size=20, z=0.0):
    g = np.arange(0.5, size, 1.0)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return PointCloud(np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)]))


def scan_oracle(cloud, dsm, r):
    # direct definition: lowest DSM z inside the vertical cylinder
    out = np.zeros(len(cloud), dtype=bool)
    for i, p in enumerate(cloud.xyz):
        d = np.hypot(*(dsm.xyz[:, :2] - p[:2]).T)
        near = dsm.xyz[d <= r, 2]
        out[i] = len(near) > 0 and p[2] < near.min()
    return out


def test_default_radius():
    assert CleaningParams().radius == 5.0
    with pytest.raises(ValueError):
        CleaningParams(0.0)


def test_injected_point_removed_surface_kept():
    dsm = flat_dsm()
    cloud = PointCloud([[5, 5, -0.5], [5, 5, 0.3], [5, 5, 0.0]])
    kept, removed = remove_underground(cloud, dsm)
    assert removed == 1
    assert kept.xyz.tolist() == [[5, 5, 0.3], [5, 5, 0.0]]


def test_cloud_equal_to_dsm_removes_nothing():
    dsm = flat_dsm()
    _, removed = remove_underground(dsm, dsm)
    assert removed == 0


def test_empty_cylinder_kept_and_empty_dsm_error():
    kept, removed = remove_underground(PointCloud([[500, 500, -100]]), flat_dsm())
    assert removed == 0 and len(kept) == 1
    with pytest.raises(ValueError):
        remove_underground(PointCloud([[0, 0, 0]]), PointCloud(np.zeros((0, 3))))


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_matches_scan_oracle(rng, backend):
    from terrasim import kernels
    if backend not in kernels.BACKENDS:
        pytest.skip("compiled kernels not built")
    dsm = PointCloud(np.column_stack([rng.uniform(0, 30, (400, 2)), rng.normal(0, 1, 400)]))
    cloud = PointCloud(np.column_stack([rng.uniform(-5, 35, (600, 2)), rng.normal(0, 2, 600)]))
    for r in (1.0, 2.5, 5.0):
        got = underground_mask(cloud, dsm, CleaningParams(r), backend=backend)
        assert np.array_equal(got, scan_oracle(cloud, dsm, r))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 4.0), st.floats(0.1, 3.0))
def test_idempotent_and_monotone(seed, r, dr):
    rng = np.random.default_rng(seed)
    dsm = PointCloud(np.column_stack([rng.uniform(0, 10, (60, 2)), rng.normal(0, 1, 60)]))
    cloud = PointCloud(np.column_stack([rng.uniform(0, 10, (120, 2)), rng.normal(0, 1.5, 120)]))
    kept, _ = remove_underground(cloud, dsm, CleaningParams(r))
    again, removed = remove_underground(kept, dsm, CleaningParams(r))
    assert removed == 0 and again.equals(kept)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.75, 4.0), st.floats(0.1, 3.0))
def test_larger_radius_keeps_at_least_as_many(seed, r, dr):
    # holds when every point already has a DSM neighbor at the smaller radius
    rng = np.random.default_rng(seed)
    g = np.arange(0.5, 12, 1.0)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    dsm = PointCloud(np.column_stack([gx.ravel(), gy.ravel(), rng.normal(0, 1, gx.size)]))
    cloud = PointCloud(np.column_stack([rng.uniform(0, 12, (150, 2)), rng.normal(0, 1.5, 150)]))
    kept, _ = remove_underground(cloud, dsm, CleaningParams(r))
    kept_big, _ = remove_underground(cloud, dsm, CleaningParams(r + dr))
    assert len(kept_big) >= len(kept)


# area of interest

def l_cameras(step=10.0, n=5):
    pts = [(i * step, j * step, 60.0) for i in range(n) for j in range(n)
           if not (i >= n // 2 and j >= n // 2)]
    return CameraPoseSet(pts)


def test_square_corners_convex():
    cams = CameraPoseSet([[0, 0, 50], [100, 0, 50], [100, 100, 50], [0, 100, 50]])
    aoi = compute_aoi(cams, AoiParams(alpha=100))
    assert aoi.area() == pytest.approx(10_000)


def test_l_shape_excludes_notch():
    cams = l_cameras()
    aoi = compute_aoi(cams, AoiParams(alpha=15))
    # 5x5 grid of 10 m minus the 3x3 upper-right block: 7 full cells plus the
    # half cell at the inner corner
    assert aoi.area() == pytest.approx(750.0)
    notch = np.array([[30.0, 30.0]])
    assert not point_in_polygon(notch, aoi)[0]
    assert point_in_polygon(cams.positions[:, :2], aoi).all()
    shp = ShapelyPolygon(aoi.outer)
    assert shp.is_valid
    assert not shp.contains(Point(30.0, 30.0))


def alpha_triangles_brute(xy, alpha):
    # every camera triple with an empty circumcircle and circumradius <= alpha
    tris = []
    for a, b, c in itertools.combinations(range(len(xy)), 3):
        p, q, r = xy[a], xy[b], xy[c]
        d = 2 * (p[0] * (q[1] - r[1]) + q[0] * (r[1] - p[1]) + r[0] * (p[1] - q[1]))
        if abs(d) < 1e-12:
            continue
        ux = ((p @ p) * (q[1] - r[1]) + (q @ q) * (r[1] - p[1]) + (r @ r) * (p[1] - q[1])) / d
        uy = ((p @ p) * (r[0] - q[0]) + (q @ q) * (p[0] - r[0]) + (r @ r) * (q[0] - p[0])) / d
        rad = np.hypot(p[0] - ux, p[1] - uy)
        if rad > alpha:
            continue
        others = np.delete(xy, [a, b, c], axis=0)
        if np.any(np.hypot(others[:, 0] - ux, others[:, 1] - uy) < rad - 1e-9):
            continue
        tris.append((p, q, r))
    return tris


def in_triangle(pt, tri, eps=1e-9):
    (ax, ay), (bx, by), (cx, cy) = tri
    s = [(bx - ax) * (pt[1] - ay) - (by - ay) * (pt[0] - ax),
         (cx - bx) * (pt[1] - by) - (cy - by) * (pt[0] - bx),
         (ax - cx) * (pt[1] - cy) - (ay - cy) * (pt[0] - cx)]
    return all(v >= -eps for v in s) or all(v <= eps for v in s)


def test_l_shape_rasterized_oracle():
    cams = l_cameras()
    aoi = compute_aoi(cams, AoiParams(alpha=15))
    tris = alpha_triangles_brute(cams.positions[:, :2], 15.0)
    gx, gy = np.meshgrid(np.arange(0.25, 40, 0.5), np.arange(0.25, 40, 0.5), indexing="ij")
    xy = np.column_stack([gx.ravel(), gy.ravel()])
    expect = np.array([any(in_triangle(p, t) for t in tris) for p in xy])
    assert np.array_equal(point_in_polygon(xy, aoi), expect)


@pytest.mark.parametrize("cams", [[[0, 0, 1], [1, 1, 1]], [[0, 0, 1], [1, 1, 1], [2, 2, 1], [3, 3, 0]]])
def test_aoi_contract_errors(cams):
    with pytest.raises(ValueError):
        compute_aoi(CameraPoseSet(cams))


def test_disconnected_alpha_falls_back_to_hull():
    a = [(x, y, 50) for x in (0, 5) for y in (0, 5)]
    b = [(x + 100, y, 50) for x, y, _ in a]
    aoi = compute_aoi(CameraPoseSet(a + b), AoiParams(alpha=10))
    assert aoi.area() == pytest.approx(105 * 5)
    with pytest.raises(ValueError):
        compute_aoi(CameraPoseSet(a + b), AoiParams(alpha=10, fallback_convex=False))


def even_odd_oracle(pts, ring):
    # plain ray casting plus an explicit on-segment test
    out = []
    n = len(ring)
    for px, py in pts:
        inside = False
        on = False
        for k in range(n):
            ax, ay = ring[k]
            bx, by = ring[(k + 1) % n]
            cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            if abs(cross) < 1e-9 and min(ax, bx) - 1e-9 <= px <= max(ax, bx) + 1e-9 \
                    and min(ay, by) - 1e-9 <= py <= max(ay, by) + 1e-9:
                on = True
            if (ay > py) != (by > py):
                if px < (bx - ax) * (py - ay) / (by - ay) + ax:
                    inside = not inside
        out.append(inside or on)
    return np.array(out)


def test_crop_matches_ray_casting_and_shapely(rng):
    aoi = compute_aoi(l_cameras(), AoiParams(alpha=15))
    xy = rng.uniform(-5, 45, size=(10_000, 2))
    cloud = PointCloud(np.column_stack([xy, rng.normal(size=len(xy))]),
                       labels=rng.integers(0, 3, len(xy)))
    cropped = crop_to_aoi(cloud, aoi)
    sel = even_odd_oracle(xy, aoi.outer)
    assert np.array_equal(cropped.xyz, cloud.xyz[sel])
    assert np.array_equal(cropped.labels, cloud.labels[sel])
    shp = ShapelyPolygon(aoi.outer)
    assert np.array_equal(sel, shapely.covers(shp, shapely.points(xy)))


def test_boundary_points_kept_and_outside_empty():
    square = Polygon2([[(0, 0), (10, 0), (10, 10), (0, 10)]])
    cloud = PointCloud([[10, 5, 0], [0, 0, 0], [5, 10, 1], [10.001, 5, 0]])
    assert len(crop_to_aoi(cloud, square)) == 3
    assert len(crop_to_aoi(PointCloud([[20, 20, 0], [-1, 3, 0]]), square)) == 0


def test_even_odd_hole():
    poly = Polygon2([[(0, 0), (10, 0), (10, 10), (0, 10)], [(3, 3), (7, 3), (7, 7), (3, 7)]])
    assert point_in_polygon([[5, 5], [1, 1], [3, 5]], poly).tolist() == [False, True, True]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_crop_idempotent(seed):
    rng = np.random.default_rng(seed)
    cams = CameraPoseSet(np.column_stack([rng.uniform(0, 50, (12, 2)), np.full(12, 40.0)]))
    aoi = compute_aoi(cams, AoiParams(alpha=float(rng.uniform(5, 60))))
    assert point_in_polygon(cams.positions[:, :2], aoi).all()
    cloud = PointCloud(np.column_stack([rng.uniform(-5, 55, (500, 2)), np.zeros(500)]))
    once = crop_to_aoi(cloud, aoi)
    assert crop_to_aoi(once, aoi).equals(once)
