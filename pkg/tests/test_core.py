import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from terrasim.core import (
    GroundElevationModel, ObjError, PlyError, Point3, PointCloud, Raster, SpatialIndex,
    TerrainClass, MaterialClass, TriMesh, build_ground_model, fill_nearest, read_mask,
    read_mesh, read_point_cloud, read_raster, write_mask, write_mesh, write_point_cloud,
    write_raster,
)

from conftest import random_cloud


def test_class_codes_are_stable():
    assert [int(c) for c in TerrainClass] == [0, 1, 2]
    assert [c.name for c in TerrainClass] == ["GROUND", "MANMADE", "VEGETATION"]
    assert [int(c) for c in MaterialClass] == [0, 1, 2]
    assert MaterialClass.ROAD == 1


def test_ascii_three_points_in_order(tmp_path):
    p = tmp_path / "a.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
                 "property float z\nend_header\n1 2 3\n4 5 6\n7 8 9\n")
    c = read_point_cloud(p)
    assert c.xyz.tolist() == [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
    assert (c.rgb == 128).all()
    assert c.labels is None


def test_missing_z_names_property(tmp_path):
    p = tmp_path / "a.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                 "end_header\n1 2\n")
    with pytest.raises(PlyError, match="'z'"):
        read_point_cloud(p)


@pytest.mark.parametrize("body,msg", [
    ("element vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n",
     "line"),
    ("element vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 nan 3\n",
     "non-finite"),
    ("element vertex 1\nproperty float x\nproperty float y\nproperty wat z\nend_header\n1 2 3\n",
     "line"),
])
def test_malformed_ascii(tmp_path, body, msg):
    p = tmp_path / "bad.ply"
    p.write_text("ply\nformat ascii 1.0\n" + body)
    with pytest.raises(PlyError, match=msg):
        read_point_cloud(p)


def test_truncated_binary_reports_offset(tmp_path, rng):
    p = tmp_path / "b.ply"
    write_point_cloud(random_cloud(rng, 20), p)
    data = p.read_bytes()
    p.write_bytes(data[:-7])
    with pytest.raises(PlyError, match="byte offset"):
        read_point_cloud(p)


@pytest.mark.parametrize("n", [10_000, 100_000])
def test_binary_round_trip_bit_identical(tmp_path, rng, n):
    c = random_cloud(rng, n)
    write_point_cloud(c, tmp_path / "c.ply")
    back = read_point_cloud(tmp_path / "c.ply")
    assert back.equals(c)
    assert back.xyz.tobytes() == c.xyz.tobytes()


def test_ascii_round_trip_within_micrometer(tmp_path, rng):
    c = random_cloud(rng, 2000)
    write_point_cloud(c, tmp_path / "c.ply", format="ascii")
    back = read_point_cloud(tmp_path / "c.ply")
    assert np.abs(back.xyz - c.xyz).max() <= 1e-6
    assert np.array_equal(back.labels, c.labels)
    assert np.array_equal(back.rgb, c.rgb)


@pytest.mark.parametrize("fmt", ["ascii", "binary-little-endian"])
def test_empty_cloud_and_label_schema(tmp_path, fmt):
    empty = PointCloud(np.zeros((0, 3)))
    write_point_cloud(empty, tmp_path / "e.ply", fmt)
    assert len(read_point_cloud(tmp_path / "e.ply")) == 0
    lab = PointCloud([[0, 0, 0], [1, 1, 1], [2, 2, 2]], labels=[0, 1, 2])
    write_point_cloud(lab, tmp_path / "l.ply", fmt)
    header = (tmp_path / "l.ply").read_bytes().split(b"end_header")[0]
    assert b"property uchar label" in header
    assert read_point_cloud(tmp_path / "l.ply").labels.tolist() == [0, 1, 2]


def test_point3_accessors():
    c = PointCloud.from_points([Point3(1, 2, 3, 10, 20, 30)])
    assert c.point(0) == Point3(1.0, 2.0, 3.0, 10, 20, 30)
    with pytest.raises(ValueError):
        PointCloud([[0, 0, np.inf]])
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], labels=[0, 1])


def test_obj_triangle_and_quad(tmp_path):
    p = tmp_path / "m.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3\n")
    m = read_mesh(p)
    assert m.vertices.shape == (4, 3) and m.faces.tolist() == [[0, 1, 2]]
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    assert read_mesh(p).faces.tolist() == [[0, 1, 2], [0, 2, 3]]
    p.write_text("v 0 0 0\nv 1 0 0\nf 1 2 5\n")
    with pytest.raises(ObjError, match="out of range"):
        read_mesh(p)


def test_obj_round_trip_10k_faces(tmp_path, rng):
    n = 71
    gx, gy = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    verts = np.column_stack([gx.ravel() * 0.37, gy.ravel() * 0.41, rng.normal(size=n * n)])
    idx = np.arange(n * n).reshape(n, n)
    a, b, c, d = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel(), idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    assert len(faces) >= 9800
    m = TriMesh(verts, faces)
    write_mesh(m, tmp_path / "g.obj")
    back = read_mesh(tmp_path / "g.obj")
    assert np.array_equal(back.faces, m.faces)
    assert np.abs(back.vertices - m.vertices).max() <= 1e-6


def test_trimesh_rejects_degenerate():
    with pytest.raises(ValueError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 0, 1]])
    with pytest.raises(ValueError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


def test_raster_and_mask_round_trip(tmp_path, rng):
    px = rng.integers(0, 256, size=(7, 9, 3)).astype(np.uint8)
    r = Raster(px, 0.25, (10.0, -3.0))
    write_raster(r, tmp_path / "o.png")
    back = read_raster(tmp_path / "o.png")
    assert np.array_equal(back.pixels, px) and back.same_geometry(r)
    write_raster(r, tmp_path / "o.ppm")
    assert np.array_equal(read_raster(tmp_path / "o.ppm").pixels, px)
    m = Raster(rng.integers(0, 3, size=(5, 6)).astype(np.uint8), 0.5, (0.0, 0.0))
    write_mask(m, tmp_path / "m.png")
    mb = read_mask(tmp_path / "m.png")
    assert np.array_equal(mb.pixels, m.pixels) and mb.same_geometry(m)


# spatial index against brute force

def test_cylinder_includes_tall_point():
    idx = SpatialIndex([[0, 0, 100], [6, 0, 0]])
    assert idx.query_cylinder((0, 0, 0), 5).tolist() == [0]
    assert idx.query_radius((0, 0, 0), 5).tolist() == []


def test_empty_index_and_bad_radius():
    idx = SpatialIndex(np.zeros((0, 3)))
    assert len(idx.query_radius((0, 0, 0), 1)) == 0
    assert len(idx.query_cylinder((0, 0, 0), 1)) == 0
    assert idx.nearest((0, 0, 0)) == -1
    with pytest.raises(ValueError):
        SpatialIndex([[0, 0, 0]]).query_radius((0, 0, 0), 0)


def test_queries_match_brute_force(rng):
    pts = rng.uniform(0, 20, size=(1000, 3))
    idx = SpatialIndex(pts)
    for _ in range(50):
        c = rng.uniform(0, 20, size=3)
        r = rng.uniform(0.5, 5)
        d3 = np.sqrt(((pts - c) ** 2).sum(1))
        d2 = np.sqrt(((pts[:, :2] - c[:2]) ** 2).sum(1))
        assert idx.query_radius(c, r).tolist() == np.flatnonzero(d3 <= r).tolist()
        assert idx.query_cylinder(c, r).tolist() == np.flatnonzero(d2 <= r).tolist()
        assert idx.nearest(c) == int(np.argmin(d3))


def test_nearest_ties_lowest_index():
    pts = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [1, 0, 0]]
    assert SpatialIndex(pts).nearest((0, 0, 0)) == 0
    assert SpatialIndex(pts[1:]).nearest((0, 0, 0)) == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(*[st.integers(-5, 5)] * 3), min_size=1, max_size=60),
       st.tuples(*[st.integers(-5, 5)] * 3), st.integers(1, 6))
def test_integer_lattice_queries_exact(pts, center, r):
    # integer coordinates make boundary hits common
    pts = np.array(pts, dtype=float)
    idx = SpatialIndex(pts)
    c = np.array(center, dtype=float)
    d3 = ((pts - c) ** 2).sum(1)
    d2 = ((pts[:, :2] - c[:2]) ** 2).sum(1)
    assert idx.query_radius(c, r).tolist() == np.flatnonzero(d3 <= r * r).tolist()
    assert idx.query_cylinder(c, r).tolist() == np.flatnonzero(d2 <= r * r).tolist()
    assert idx.nearest(c) == int(np.flatnonzero(d3 == d3.min()).min())


# ground model

def _ground_cloud(xy, z):
    xyz = np.column_stack([xy, z])
    return PointCloud(xyz, labels=np.zeros(len(xyz), dtype=int))


def _grid(x0, x1, y0, y1, step):
    gx, gy = np.meshgrid(np.arange(x0, x1, step), np.arange(y0, y1, step), indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def test_flat_plane_all_zero():
    xy = _grid(0.25, 20, 0.25, 20, 0.5)
    g = build_ground_model(_ground_cloud(xy, np.zeros(len(xy))))
    assert isinstance(g, GroundElevationModel)
    assert np.all(g.elevation == 0) and g.valid.all()


def test_sloped_plane_within_quantization():
    xy = _grid(0.25, 20, 0.25, 20, 0.5)
    g = build_ground_model(_ground_cloud(xy, 0.1 * xy[:, 0]), cell=1.0)
    cx = g.origin[0] + (np.arange(g.shape[0]) + 0.5) * g.cell
    assert np.abs(g.elevation - 0.1 * cx[:, None]).max() <= 0.1 * g.cell + 1e-12


def test_median_resists_noise():
    xy = np.array([[0.5, 0.5]] * 5)
    g = build_ground_model(_ground_cloud(xy, [0, 0, 0, -8, 0.1]))
    assert g.elevation[0, 0] == 0.0


def test_left_half_fill_from_nearest_edge():
    xy = _grid(0.25, 10, 0.25, 20, 0.5)
    z = 0.2 * xy[:, 1] + 0.05 * xy[:, 0]
    g = build_ground_model(_ground_cloud(xy, z), extent=(0, 0, 20, 20))
    assert g.shape == (20, 20)
    assert g.valid[:10].all() and not g.valid[10:].any()
    for ix in range(10, 20):
        assert np.array_equal(g.elevation[ix], g.elevation[9])


def test_fill_nearest_tie_lower_index_and_idempotent():
    v = np.zeros((3, 1))
    valid = np.array([[True], [False], [True]])
    v[0, 0], v[2, 0] = 1.0, 5.0
    filled = fill_nearest(v, valid)
    assert filled[1, 0] == 1.0
    assert np.array_equal(fill_nearest(filled, np.ones_like(valid)), filled)


def test_ground_model_errors():
    with pytest.raises(ValueError):
        build_ground_model(PointCloud([[0, 0, 0]]))
    with pytest.raises(ValueError):
        build_ground_model(PointCloud([[0, 0, 0]], labels=[1]))
