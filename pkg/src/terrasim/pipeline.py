"""End-to-end orchestration: clean, crop, segment, trees, materials, mesh, path."""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import __version__
from .core import (CameraPoseSet, TerrainClass, build_ground_model, estimate_ground_model,
                   read_mask, read_mesh, read_point_cloud, read_raster, write_mesh,
                   write_point_cloud)
from .evaluate import evaluate
from .materials import (ImportClassifier, PatchGridParams, build_patch_dataset, build_vector_map,
                        fit_baseline, read_vector_map, write_vector_map)
from .meshseg import MeshSegParams, flatten_trees, segment_mesh
from .navigate import astar, build_navgrid, write_path, write_pgm
from .preprocess import AoiParams, CleaningParams, compute_aoi, crop_to_aoi, remove_underground
from .segment import BaselineLabeler, BaselineParams, ImportLabeler, UNetLabeler, WeightBundle, \
    segment_cloud
from .trees import TreeParams, extract_trees, read_tree_table
from .voxelize import VoxelParams

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "terrasim-manifest/1"
PATH_KEYS = ("cloud", "dsm", "cameras", "ortho", "ortho_meta", "train_mask", "mesh", "tree_table",
             "weights", "import_map", "outdir")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    cloud: Optional[str] = None
    dsm: Optional[str] = None
    cameras: Optional[str] = None
    ortho: Optional[str] = None
    ortho_meta: Optional[str] = None
    train_mask: Optional[str] = None
    mesh: Optional[str] = None
    tree_table: Optional[str] = None
    outdir: str = "out"
    radius: float = 5.0
    alpha: float = 30.0
    voxel_large: float = 40.0
    voxel_small: float = 0.5
    labeler: str = "baseline"
    weights: Optional[str] = None
    ground_height: float = 0.5
    planarity_rms: float = 0.15
    ground_cell: float = 1.0
    tree_method: str = "poisson"
    zone: int = 7
    patch_size: float = 5.0
    stride: float = 3.0
    classifier: str = "baseline"
    import_map: Optional[str] = None
    match_radius: float = 0.5
    road_weight: float = 0.2
    soil_weight: float = 1.0
    vegetation_weight: float = 1.0
    nav_cell: float = 1.0
    path_start: Optional[list] = None
    path_goal: Optional[list] = None
    seed: int = 42

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        for key in PATH_KEYS:
            val = getattr(cfg, key)
            if val and not os.path.isabs(val):
                setattr(cfg, key, os.path.normpath(os.path.join(base_dir, val)))
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), os.path.dirname(os.path.abspath(path)))


def _require(stage, path, what):
    if not path:
        raise StageError(stage, f"no {what} configured")
    if not os.path.exists(path):
        raise StageError(stage, f"{what} not found: {path}")


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every configured stage in order; returns the manifest dict (also written to disk)."""
    out = config.outdir
    os.makedirs(out, exist_ok=True)
    timings, artifacts = {}, {}
    stage = "clean"
    report = None
    try:
        t0 = time.perf_counter()
        _require(stage, config.cloud, "point cloud")
        _require(stage, config.dsm, "DSM")
        cloud = read_point_cloud(config.cloud)
        dsm = read_point_cloud(config.dsm)
        cloud, removed = remove_underground(cloud, dsm, CleaningParams(config.radius))
        log.info("clean: removed %d underground points", removed)
        timings["clean"] = time.perf_counter() - t0

        stage = "crop"
        t0 = time.perf_counter()
        if config.cameras:
            _require(stage, config.cameras, "camera file")
            cams = read_cameras(config.cameras)
            aoi = compute_aoi(cams, AoiParams(config.alpha))
            cloud = crop_to_aoi(cloud, aoi)
            with open(os.path.join(out, "aoi.json"), "w", encoding="utf-8") as fh:
                json.dump({"outer": aoi.outer.tolist()}, fh)
        artifacts["cleaned_cloud"] = os.path.join(out, "cleaned.ply")
        write_point_cloud(cloud, artifacts["cleaned_cloud"])
        timings["crop"] = time.perf_counter() - t0

        stage = "segment"
        t0 = time.perf_counter()
        truth = cloud.labels
        vparams = VoxelParams((config.voxel_large,) * 3, (config.voxel_small,) * 3)
        xy = cloud.xyz[:, :2]
        extent = (*xy.min(axis=0), *xy.max(axis=0))
        labeler = make_labeler(config.labeler, cloud, config, extent)
        labeled = segment_cloud(cloud, labeler, vparams)
        artifacts["labeled_cloud"] = os.path.join(out, "labeled.ply")
        write_point_cloud(labeled, artifacts["labeled_cloud"])
        timings["segment"] = time.perf_counter() - t0

        stage = "trees"
        t0 = time.perf_counter()
        if np.any(labeled.labels == TerrainClass.GROUND):
            ground = build_ground_model(labeled, config.ground_cell, extent)
        else:
            ground = estimate_ground_model(labeled, config.ground_cell, extent=extent)
        table = read_tree_table(config.tree_table) if config.tree_table else read_tree_table()
        trees = extract_trees(labeled, ground, table, config.zone,
                              TreeParams(method=config.tree_method, seed=config.seed))
        artifacts["trees"] = os.path.join(out, "trees.json")
        with open(artifacts["trees"], "w", encoding="utf-8") as fh:
            json.dump([t.to_dict() for t in trees], fh, indent=2)
        timings["trees"] = time.perf_counter() - t0

        stage = "materials"
        t0 = time.perf_counter()
        if config.ortho:
            _require(stage, config.ortho, "orthophoto")
            ortho = read_raster(config.ortho, config.ortho_meta)
            params = PatchGridParams(config.patch_size, config.stride)
            if config.classifier == "baseline":
                _require(stage, config.train_mask, "training mask")
                mask = read_mask(config.train_mask)
                patches, labels, counts = build_patch_dataset(ortho, mask, params)
                classifier = fit_baseline(patches, labels)
                log.info("materials: training patches per class %s", counts)
            elif config.classifier == "import":
                _require(stage, config.import_map, "imported vector map")
                classifier = ImportClassifier(read_vector_map(config.import_map))
            else:
                raise ValueError(f"unknown classifier {config.classifier!r}")
            vmap = build_vector_map(ortho, classifier, params)
            artifacts["material_map"] = os.path.join(out, "map.csv")
            write_vector_map(vmap, artifacts["material_map"])
        else:
            vmap = None
        timings["materials"] = time.perf_counter() - t0

        stage = "mesh"
        t0 = time.perf_counter()
        if config.mesh:
            _require(stage, config.mesh, "mesh")
            mesh = read_mesh(config.mesh)
            parts, _ = segment_mesh(mesh, labeled, MeshSegParams(config.match_radius))
            veg = parts[TerrainClass.VEGETATION]
            flat = flatten_trees(veg, np.arange(len(veg.vertices)), ground)
            for name, m in (("ground", parts[TerrainClass.GROUND]),
                            ("manmade", parts[TerrainClass.MANMADE]),
                            ("vegetation_flattened", flat)):
                artifacts[f"mesh_{name}"] = os.path.join(out, f"{name}.obj")
                write_mesh(m, artifacts[f"mesh_{name}"])
        timings["mesh"] = time.perf_counter() - t0

        stage = "path"
        t0 = time.perf_counter()
        if config.path_start is not None and config.path_goal is not None:
            grid = build_navgrid(extent, vmap, {0: config.soil_weight, 1: config.road_weight,
                                                2: config.vegetation_weight},
                                 cell=config.nav_cell, lookup_radius=config.stride)
            res = astar(grid, grid.cell_of(*config.path_start), grid.cell_of(*config.path_goal))
            artifacts["path"] = os.path.join(out, "path.json")
            write_path(res, artifacts["path"])
            write_pgm(grid, os.path.join(out, "path.pgm"), res)
        timings["path"] = time.perf_counter() - t0

        stage = "eval"
        if truth is not None:
            report = evaluate(labeled.labels, truth, timings)
            artifacts["report"] = os.path.join(out, "report.txt")
            with open(artifacts["report"], "w", encoding="utf-8") as fh:
                fh.write(report.render() + "\n")
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "seed": config.seed,
        "parameters": asdict(config),
        "timings_s": timings,
        "artifacts": artifacts,
        "evaluation": None if report is None else report.to_dict(),
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def make_labeler(kind: str, cloud, config: PipelineConfig, extent=None):
    if kind == "baseline":
        ground = estimate_ground_model(cloud, config.ground_cell, extent=extent)
        return BaselineLabeler(ground, BaselineParams(config.ground_height, config.planarity_rms))
    if kind == "unet":
        if not config.weights:
            raise ValueError("the unet labeler needs a weight bundle directory")
        return UNetLabeler(WeightBundle.load(config.weights))
    if kind == "import":
        if cloud.labels is None:
            raise ValueError("the import labeler needs a cloud with a label property")
        return ImportLabeler(cloud.labels)
    raise ValueError(f"unknown labeler {kind!r}")


def read_cameras(path) -> CameraPoseSet:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{path}: cameras must be an array of [x, y, z]")
    return CameraPoseSet(arr)


def write_cameras(cameras: CameraPoseSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(np.asarray(cameras.positions).tolist(), fh)
