import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from terrasim.core import PointCloud
from terrasim.voxelize import (
    UNLABELED, VoxelParams, dump_block, load_block_dump, point_labels_from_voxels,
    voxel_labels_from_points, voxelize,
)


def test_default_dims():
    p = VoxelParams()
    assert p.large == (40.0, 40.0, 40.0) and p.small == (0.5, 0.5, 0.5)
    assert p.dims == (80, 80, 80)


def test_divisibility_enforced():
    with pytest.raises(ValueError):
        VoxelParams(large=(40, 40, 40), small=(0.3, 0.5, 0.5))
    with pytest.raises(ValueError):
        VoxelParams(small=(0, 0.5, 0.5))
    assert VoxelParams(large=(10, 12, 3), small=(0.5, 0.25, 1.5)).dims == (20, 48, 2)


def test_single_point_one_cell():
    blocks = voxelize(PointCloud([[3.2, -7.9, 101.0]]))
    assert len(blocks) == 1
    b = blocks[0]
    assert int(b.occupancy.sum()) == 1 and b.dims == (80, 80, 80)
    assert np.allclose(b.origin, [0, -40, 80])


def test_empty_cloud_error():
    with pytest.raises(ValueError):
        voxelize(PointCloud(np.zeros((0, 3))))


def test_occupancy_equals_distinct_quantized_triples(rng):
    xyz = rng.uniform(0.001, 39.999, size=(1000, 3))
    blocks = voxelize(PointCloud(xyz))
    assert len(blocks) == 1
    distinct = {tuple(t) for t in np.floor(xyz / 0.5).astype(int)}
    assert int(blocks[0].occupancy.sum()) == len(distinct)


def test_boundary_goes_up_except_global_max():
    pts = PointCloud([[0, 0, 0], [0.5, 0, 0], [40, 0, 0], [80, 0, 0]])
    blocks = voxelize(pts)
    where = {}
    for b in blocks:
        for pid, c in zip(b.point_ids, b.cells):
            where[int(pid)] = (b.index, tuple(int(v) for v in c))
    assert where[0] == ((0, 0, 0), (0, 0, 0))
    assert where[1] == ((0, 0, 0), (1, 0, 0))
    assert where[2] == ((1, 0, 0), (0, 0, 0))
    # global max corner is clamped into the last block
    assert where[3] == ((1, 0, 0), (79, 0, 0))


def check_invariants(cloud, params):
    blocks = voxelize(cloud, params)
    seen = np.concatenate([b.point_ids for b in blocks])
    assert len(seen) == len(cloud) and len(np.unique(seen)) == len(cloud)
    keys = [b.index for b in blocks]
    assert keys == sorted(keys)
    large = np.array(params.large)
    anchor = np.floor(cloud.xyz.min(0) / large) * large
    total = 0
    for b in blocks:
        assert b.dims == params.dims
        assert np.allclose(b.origin, anchor + np.array(b.index) * large)
        pts = cloud.xyz[b.point_ids]
        q = np.floor((pts - b.origin) / b.small).astype(int)
        clamped = np.clip(q, 0, np.array(b.dims) - 1)
        # only the global max face may need clamping
        assert np.array_equal(clamped, b.cells)
        assert np.all(b.cells >= 0) and np.all(b.cells < np.array(b.dims))
        distinct = {tuple(c) for c in b.cells}
        assert int(b.occupancy.sum()) == len(distinct)
        total += len(distinct)
    return blocks, total


def test_partition_and_conservation_random_clouds():
    for seed in range(3):
        rng = np.random.default_rng(seed)
        xyz = rng.uniform(-50, 70, size=(20_000, 3)) * [1, 1, 0.3]
        check_invariants(PointCloud(xyz), VoxelParams())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 400),
       st.sampled_from([((4, 4, 4), (0.5, 0.5, 0.5)), ((3, 6, 2), (1.0, 0.5, 0.25))]))
def test_invariants_property(seed, n, sizes):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-7, 9, size=(n, 3))
    if n > 3:
        xyz[:3] = np.round(xyz[:3])  # exact boundary hits
    check_invariants(PointCloud(xyz), VoxelParams(*sizes))


def test_deterministic_ordering(rng):
    cloud = PointCloud(rng.uniform(0, 100, size=(5000, 3)))
    a, b = voxelize(cloud), voxelize(cloud)
    assert [x.index for x in a] == [x.index for x in b]
    assert all(np.array_equal(x.point_ids, y.point_ids) for x, y in zip(a, b))


def one_block(xyz, labels):
    cloud = PointCloud(xyz, labels=labels)
    (b,) = voxelize(cloud, VoxelParams((4, 4, 4), (1, 1, 1)))
    return cloud, b


def test_majority_and_tie_rule():
    xyz = np.array([[0.5] * 3] * 4 + [[2.5, 0.5, 0.5]] * 2)
    cloud, b = one_block(xyz, [0, 0, 0, 2, 1, 2])
    lb = voxel_labels_from_points(b, cloud.labels)
    assert lb.labels[0, 0, 0] == 0    # 3 Ground vs 1 Vegetation
    assert lb.labels[2, 0, 0] == 1    # 1 ManMade vs 1 Vegetation
    assert (lb.labels == UNLABELED).sum() == 64 - 2
    pts = point_labels_from_voxels(lb)
    # mixed cell labeled Ground => all its points Ground
    assert pts[np.isin(b.point_ids, [0, 1, 2, 3])].tolist() == [0] * 4


def test_majority_counting_oracle(rng):
    cells = rng.integers(0, 5, size=(100, 3))
    reps = rng.integers(1, 7, size=100)
    xyz = np.repeat(cells + 0.5, reps, axis=0)
    labels = rng.integers(0, 3, size=len(xyz))
    cloud = PointCloud(xyz, labels=labels)
    (b,) = voxelize(cloud, VoxelParams((5, 5, 5), (1, 1, 1)))
    lb = voxel_labels_from_points(b, labels)
    for c in {tuple(c) for c in cells}:
        sel = np.all(np.floor(xyz).astype(int) == c, axis=1)
        counts = [int(np.sum(labels[sel] == k)) for k in range(3)]
        best = max(counts)
        assert lb.labels[c] == counts.index(best)


def test_class_pure_round_trip(rng):
    cells = rng.permutation(64)[:20]
    cell_label = rng.integers(0, 3, size=20)
    xyz, labels = [], []
    for c, lab in zip(cells, cell_label):
        base = np.array(np.unravel_index(c, (4, 4, 4)), dtype=float)
        pts = base + rng.uniform(0.05, 0.95, size=(5, 3))
        xyz.append(pts)
        labels += [lab] * 5
    cloud, b = one_block(np.vstack(xyz), labels)
    back = point_labels_from_voxels(voxel_labels_from_points(b, cloud.labels))
    assert np.array_equal(back, cloud.labels[b.point_ids])


def test_unlabeled_cell_error():
    cloud, b = one_block(np.array([[0.5, 0.5, 0.5]]), [0])
    with pytest.raises(ValueError):
        point_labels_from_voxels(b)
    lb = voxel_labels_from_points(b, cloud.labels)
    lb.labels[0, 0, 0] = UNLABELED
    with pytest.raises(ValueError):
        point_labels_from_voxels(lb)


def test_dump_round_trip(rng):
    (b,) = voxelize(PointCloud(rng.uniform(0, 39, size=(300, 3))))
    data = dump_block(b)
    assert data[:4] == b"VXB1"
    assert len(data) == 76 + 80 ** 3 // 8
    index, origin, small, occ = load_block_dump(data)
    assert index == b.index
    assert np.array_equal(origin, b.origin) and np.array_equal(small, b.small)
    assert np.array_equal(occ, b.occupancy)
