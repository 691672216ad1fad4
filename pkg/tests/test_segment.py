import numpy as np
import pytest

from terrasim.core import PointCloud, TerrainClass, build_ground_model, estimate_ground_model
from terrasim.segment import (
    BaselineLabeler, BaselineParams, ImportLabeler, UNetConfig, UNetLabeler, WeightBundle,
    baseline_geometric_label, init_weights, planarity_residual, segment_cloud, tensor_shapes,
    unet_forward,
)
from terrasim.synth import BlobTree, Box, SceneSpec, synth_scene
from terrasim.voxelize import VoxelParams, voxelize

SMALL = UNetConfig(levels=2, base_channels=4)


def test_unet_defaults():
    c = UNetConfig()
    assert (c.levels, c.base_channels, c.kernel_size, c.pool_factor, c.convs_per_level,
            c.classes, c.dropout) == (3, 16, 3, 2, 2, 3, 0.5)
    shapes = tensor_shapes(c)
    assert shapes["enc0.conv0.weight"] == (3, 3, 3, 1, 16)
    assert shapes["bottleneck.conv0.weight"] == (3, 3, 3, 64, 128)
    assert shapes["dec0.conv0.weight"] == (3, 3, 3, 16 + 32, 16)
    assert shapes["head.weight"] == (1, 1, 1, 16, 3)


def test_zero_input_is_probability_field():
    w = init_weights(SMALL, seed=1)
    p = unet_forward(np.zeros((16, 16, 16, 1)), w)
    assert p.shape == (16, 16, 16, 3)
    assert np.all(p >= 0) and np.abs(p.sum(-1) - 1).max() <= 1e-5


def test_forward_deterministic(rng):
    occ = (rng.uniform(size=(16, 16, 16)) < 0.2).astype(np.float32)
    a = unet_forward(occ, init_weights(SMALL, seed=7))
    b = unet_forward(occ, init_weights(SMALL, seed=7))
    assert np.array_equal(a, b)
    c = unet_forward(occ, init_weights(SMALL, seed=8))
    assert not np.array_equal(a, c)


def test_default_block_shape():
    cfg = UNetConfig(base_channels=2)
    occ = np.zeros((80, 80, 80, 1), np.float32)
    occ[10:20, 30:40, 5] = 1
    p = unet_forward(occ, init_weights(cfg, 0))
    assert p.shape == (80, 80, 80, 3)
    assert np.abs(p.sum(-1) - 1).max() <= 1e-5


def test_shape_errors_name_layer():
    w = init_weights(SMALL, 0)
    with pytest.raises(ValueError, match="divisible"):
        unet_forward(np.zeros((10, 16, 16, 1)), w)
    with pytest.raises(ValueError):
        unet_forward(np.zeros((16, 16, 16, 2)), w)
    w.tensors["dec1.conv0.weight"] = np.zeros((3, 3, 3, 5, 8), np.float32)
    with pytest.raises(ValueError, match="dec1.conv0.weight"):
        unet_forward(np.zeros((16, 16, 16, 1)), w)
    w = init_weights(SMALL, 0)
    del w.tensors["head.bias"]
    with pytest.raises(ValueError, match="head.bias"):
        w.check()


def test_bundle_round_trip(tmp_path, rng):
    w = init_weights(SMALL, 3)
    w.save(tmp_path / "b")
    back = WeightBundle.load(tmp_path / "b")
    assert back.config == SMALL
    assert all(np.array_equal(back.tensors[k], v) for k, v in w.tensors.items())
    occ = (rng.uniform(size=(8, 8, 8)) < 0.3).astype(np.float32)
    assert np.array_equal(unet_forward(occ, w), unet_forward(occ, back))
    import json
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["format"] == "terrasim-unet-weights" and man["version"] == 1
    offsets = [t["offset"] for t in man["tensors"]]
    assert offsets == sorted(offsets) and offsets[0] == 0


def test_colors_never_reach_network(rng):
    xyz = rng.uniform(0, 7.9, size=(500, 3))
    a = PointCloud(xyz, rng.integers(0, 256, (500, 3)))
    b = PointCloud(xyz, rng.integers(0, 256, (500, 3)))
    params = VoxelParams((8, 8, 8), (0.5, 0.5, 0.5))
    lab = UNetLabeler(init_weights(SMALL, 2))
    assert np.array_equal(segment_cloud(a, lab, params).labels, segment_cloud(b, lab, params).labels)


def test_unet_labeler_covers_occupied(rng):
    xyz = rng.uniform(0, 7.9, size=(300, 3))
    (block,) = voxelize(PointCloud(xyz), VoxelParams((8, 8, 8), (0.5, 0.5, 0.5)))
    grid = UNetLabeler(init_weights(SMALL, 0)).label_block(block)
    assert np.array_equal(grid >= 0, block.occupancy > 0)


# geometric baseline

def test_planarity_of_plane_and_blob(rng):
    occ = np.zeros((9, 9, 9), np.uint8)
    occ[:, :, 4] = 1
    cells = np.argwhere(occ)
    assert np.allclose(planarity_residual(occ, (0.5, 0.5, 0.5), cells), 0, atol=1e-9)
    blob = (rng.uniform(size=(9, 9, 9)) < 0.5).astype(np.uint8)
    res = planarity_residual(blob, (0.5, 0.5, 0.5), np.array([[4, 4, 4]]))
    assert res[0] > 0.15


def scene_accuracy(spec, seed=0):
    s = synth_scene(seed, spec)
    cloud = s.cloud.subset(~s.noise_mask)
    ground = build_ground_model(cloud)
    pred = segment_cloud(cloud.with_labels(None), BaselineLabeler(ground)).labels
    truth = cloud.labels
    return {c: float(np.mean(pred[truth == c] == c)) for c in TerrainClass if np.any(truth == c)}


def test_flat_plane_all_ground():
    acc = scene_accuracy(SceneSpec(size=(30, 30)))
    assert acc == {TerrainClass.GROUND: 1.0}


def test_box_roof_and_walls_manmade():
    spec = SceneSpec(size=(30, 30), boxes=[Box(15, 15, 8, 8, 5)])
    s = synth_scene(0, spec)
    ground = build_ground_model(s.cloud)
    pred = segment_cloud(s.cloud.with_labels(None), BaselineLabeler(ground)).labels
    roof = (s.truth == TerrainClass.MANMADE) & (s.cloud.xyz[:, 2] > 4.9)
    wall = (s.truth == TerrainClass.MANMADE) & (s.cloud.xyz[:, 2] > 1.0) & ~roof
    assert np.mean(pred[roof] == TerrainClass.MANMADE) >= 0.95
    assert np.mean(pred[wall] == TerrainClass.MANMADE) >= 0.95


def test_blob_above_ground_vegetation():
    acc = scene_accuracy(SceneSpec(size=(30, 30), trees=[BlobTree(15, 15, 2.5, 2.0, 3.0)]))
    assert acc[TerrainClass.VEGETATION] >= 0.95
    assert acc[TerrainClass.GROUND] == 1.0


def test_baseline_grow_zero_is_literal_rule():
    spec = SceneSpec(size=(30, 30), boxes=[Box(15, 15, 8, 8, 5)])
    s = synth_scene(0, spec)
    ground = build_ground_model(s.cloud)
    (block,) = voxelize(s.cloud)
    literal = baseline_geometric_label(block, ground, BaselineParams(grow=0))
    grown = baseline_geometric_label(block, ground)
    assert np.array_equal(literal >= 0, block.occupancy > 0)
    # growth only converts raised cells to ManMade
    changed = literal != grown
    assert np.all(grown[changed] == TerrainClass.MANMADE)
    assert np.all(literal[changed] == TerrainClass.VEGETATION)


def test_estimated_ground_model_on_unlabeled():
    s = synth_scene(1)
    cloud = s.cloud.subset(~s.noise_mask)
    est = estimate_ground_model(cloud.with_labels(None))
    ref = build_ground_model(cloud)
    assert est.shape == ref.shape
    assert np.abs(est.elevation - ref.elevation).max() < 0.5


def test_import_labeler_and_determinism(rng):
    s = synth_scene(2)
    truth = s.truth
    a = segment_cloud(s.cloud, ImportLabeler(truth))
    b = segment_cloud(s.cloud, ImportLabeler(truth))
    assert a.labels.tobytes() == b.labels.tobytes()
    assert len(a) == len(s.cloud)
    assert np.mean(a.labels == truth) > 0.97


def test_bad_labeler_rejected(rng):
    class Lazy:
        def label_block(self, block):
            return np.zeros(block.dims, np.int8)

    with pytest.raises(ValueError, match="occupied"):
        segment_cloud(PointCloud(rng.uniform(0, 5, (50, 3))), Lazy())
