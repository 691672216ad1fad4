"""Command-line entry point: ``terrasim <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from importlib import resources

import numpy as np

from .core import (TerrainClass, build_ground_model, estimate_ground_model, read_mask, read_mesh,
                   read_point_cloud, read_raster, write_mask, write_mesh, write_point_cloud,
                   write_raster)
from .evaluate import evaluate


class CliError(Exception):
    def __init__(self, stage, msg):
        super().__init__(f"[{stage}] {msg}")


def _pair(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from None
    return [x, y]


def cmd_clean(args):
    from .preprocess import CleaningParams, remove_underground

    cloud = read_point_cloud(args.cloud)
    dsm = read_point_cloud(args.dsm)
    kept, removed = remove_underground(cloud, dsm, CleaningParams(args.radius))
    write_point_cloud(kept, args.out, args.format)
    print(f"removed {removed} of {len(cloud)} points")


def cmd_crop(args):
    from .pipeline import read_cameras
    from .preprocess import AoiParams, compute_aoi, crop_to_aoi

    cloud = read_point_cloud(args.cloud)
    aoi = compute_aoi(read_cameras(args.cameras), AoiParams(args.alpha, not args.no_fallback))
    cropped = crop_to_aoi(cloud, aoi)
    write_point_cloud(cropped, args.out, args.format)
    print(f"kept {len(cropped)} of {len(cloud)} points; AOI area {aoi.area():.1f} m^2")


def cmd_voxelize(args):
    from .voxelize import VoxelParams, dump_block, voxelize

    cloud = read_point_cloud(args.cloud)
    blocks = voxelize(cloud, VoxelParams((args.large,) * 3, (args.small,) * 3))
    summary = [{"index": list(b.index), "origin": b.origin.tolist(), "dims": list(b.dims),
                "points": int(len(b.point_ids)), "occupied": int(b.occupancy.sum())} for b in blocks]
    if args.dump:
        os.makedirs(args.dump, exist_ok=True)
        for b in blocks:
            name = "block_{}_{}_{}.vxb".format(*b.index)
            with open(os.path.join(args.dump, name), "wb") as fh:
                fh.write(dump_block(b))
    text = json.dumps(summary, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text)


def cmd_segment(args):
    from .pipeline import PipelineConfig, make_labeler
    from .segment import segment_cloud
    from .voxelize import VoxelParams

    cloud = read_point_cloud(args.cloud)
    cfg = PipelineConfig(weights=args.weights)
    labeler = make_labeler(args.labeler, cloud, cfg)
    labeled = segment_cloud(cloud, labeler, VoxelParams((args.large,) * 3, (args.small,) * 3))
    write_point_cloud(labeled, args.out, args.format)
    counts = np.bincount(labeled.labels, minlength=3)
    print(", ".join(f"{c.name}={n}" for c, n in zip(TerrainClass, counts)))


def cmd_init_weights(args):
    from .segment import UNetConfig, init_weights

    cfg = UNetConfig(levels=args.levels, base_channels=args.base_channels)
    init_weights(cfg, args.seed).save(args.out)
    print(f"wrote random weight bundle to {args.out}")


def cmd_trees(args):
    from .trees import TreeParams, extract_trees, read_tree_table

    cloud = read_point_cloud(args.cloud)
    if cloud.labels is None:
        raise CliError("trees", f"{args.cloud} has no label property")
    if np.any(cloud.labels == TerrainClass.GROUND):
        ground = build_ground_model(cloud)
    else:
        ground = estimate_ground_model(cloud)
    table = read_tree_table(args.table) if args.table else read_tree_table()
    trees = extract_trees(cloud, ground, table, args.zone, TreeParams(method=args.method, seed=args.seed))
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump([t.to_dict() for t in trees], fh, indent=2)
    print(f"extracted {len(trees)} trees")


def cmd_materials(args):
    from .materials import (ImportClassifier, PatchGridParams, build_patch_dataset,
                            build_vector_map, fit_baseline, read_vector_map, write_vector_map)

    ortho = read_raster(args.ortho, args.meta)
    params = PatchGridParams(args.patch, args.stride)
    if args.classifier == "baseline":
        if not args.train_mask:
            raise CliError("materials", "--train-mask is required for the baseline classifier")
        patches, labels, counts = build_patch_dataset(ortho, read_mask(args.train_mask), params)
        print("training patches: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
        classifier = fit_baseline(patches, labels)
    else:
        if not args.predictions:
            raise CliError("materials", "--predictions is required for the import classifier")
        classifier = ImportClassifier(read_vector_map(args.predictions))
    vmap = build_vector_map(ortho, classifier, params)
    write_vector_map(vmap, args.out)
    print(f"wrote {len(vmap)} map points")


def cmd_mesh(args):
    from .meshseg import MeshSegParams, flatten_trees, segment_mesh

    mesh = read_mesh(args.mesh)
    cloud = read_point_cloud(args.cloud)
    parts, _ = segment_mesh(mesh, cloud, MeshSegParams(args.radius))
    ground = build_ground_model(cloud) if np.any(cloud.labels == TerrainClass.GROUND) \
        else estimate_ground_model(cloud)
    veg = parts[TerrainClass.VEGETATION]
    os.makedirs(args.outdir, exist_ok=True)
    write_mesh(parts[TerrainClass.GROUND], os.path.join(args.outdir, "ground.obj"))
    write_mesh(parts[TerrainClass.MANMADE], os.path.join(args.outdir, "manmade.obj"))
    write_mesh(flatten_trees(veg, np.arange(len(veg.vertices)), ground),
               os.path.join(args.outdir, "vegetation_flattened.obj"))
    print(", ".join(f"{c.name}={len(parts[c].faces)} faces" for c in TerrainClass))


def cmd_path(args):
    from .materials import read_vector_map
    from .navigate import astar, build_navgrid, write_path, write_pgm

    vmap = read_vector_map(args.map, args.meta)
    if args.extent:
        extent = [float(v) for v in args.extent.split(",")]
    else:
        half = vmap.patch / 2
        extent = [*(vmap.xy.min(axis=0) - half), *(vmap.xy.max(axis=0) + half)]
    grid = build_navgrid(extent, vmap, {0: args.soil, 1: args.road, 2: args.vegetation},
                         cell=args.cell, lookup_radius=vmap.stride)
    res = astar(grid, grid.cell_of(*args.start), grid.cell_of(*args.goal))
    write_path(res, args.out)
    if args.pgm:
        write_pgm(grid, args.pgm, res)
    if not res.found:
        print("no path")
        return 1
    print(f"path of {len(res.cells)} cells, weighted cost {res.cost:.3f}, length {res.length:.3f} m")


def cmd_run(args):
    from .pipeline import PipelineConfig, run_pipeline

    cfg = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    for key in ("outdir", "seed", "labeler", "weights", "tree_method", "zone"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    manifest = run_pipeline(cfg)
    if manifest.get("evaluation"):
        with open(manifest["artifacts"]["report"], encoding="utf-8") as fh:
            print(fh.read(), end="")
    print(f"manifest: {os.path.join(cfg.outdir, 'manifest.json')}")


def cmd_eval(args):
    pred = read_point_cloud(args.pred)
    truth = read_point_cloud(args.truth)
    if pred.labels is None or truth.labels is None:
        raise CliError("eval", "both clouds need a label property")
    report = evaluate(pred.labels, truth.labels)
    print(report.render())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)


def cmd_synth(args):
    from .pipeline import write_cameras
    from .synth import SceneSpec, default_scene_spec, synth_scene

    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = SceneSpec.from_dict(json.load(fh))
    else:
        spec = default_scene_spec(args.seed, slope=(args.slope, 0.0), underground_noise=args.noise)
    scene = synth_scene(args.seed, spec)
    out = args.out
    os.makedirs(out, exist_ok=True)
    write_point_cloud(scene.cloud, os.path.join(out, "cloud.ply"))
    write_point_cloud(scene.dsm, os.path.join(out, "dsm.ply"))
    write_cameras(scene.cameras, os.path.join(out, "cameras.json"))
    write_raster(scene.ortho, os.path.join(out, "ortho.png"))
    write_mask(scene.mask, os.path.join(out, "mask.png"))
    write_mesh(scene.mesh, os.path.join(out, "mesh.obj"))
    with resources.as_file(resources.files("terrasim").joinpath("data/trees.csv")) as src:
        shutil.copyfile(src, os.path.join(out, "trees.csv"))
    with open(os.path.join(out, "scene.json"), "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
    W, D = spec.size
    road_y = spec.roads[0].y0 + 1.0 if spec.roads else D / 2
    config = {
        "cloud": "cloud.ply", "dsm": "dsm.ply", "cameras": "cameras.json", "ortho": "ortho.png",
        "train_mask": "mask.png", "mesh": "mesh.obj", "tree_table": "trees.csv",
        "outdir": "out", "seed": args.seed, "zone": 7,
        "path_start": [5.0, road_y - 8.0], "path_goal": [W - 5.0, road_y - 8.0],
    }
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
    print(f"wrote synthetic scene ({len(scene.cloud)} points) to {out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="terrasim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def fmt(sp):
        sp.add_argument("--format", default="binary-little-endian",
                        choices=["ascii", "binary-little-endian"])

    s = sub.add_parser("clean", help="remove underground artifacts using the DSM")
    s.add_argument("--cloud", required=True)
    s.add_argument("--dsm", required=True)
    s.add_argument("--radius", type=float, default=5.0)
    s.add_argument("--out", required=True)
    fmt(s)
    s.set_defaults(func=cmd_clean)

    s = sub.add_parser("crop", help="crop to the camera-defined area of interest")
    s.add_argument("--cloud", required=True)
    s.add_argument("--cameras", required=True)
    s.add_argument("--alpha", type=float, default=30.0)
    s.add_argument("--no-fallback", action="store_true", help="fail instead of using the convex hull")
    s.add_argument("--out", required=True)
    fmt(s)
    s.set_defaults(func=cmd_crop)

    s = sub.add_parser("voxelize", help="summarize (and optionally dump) voxel blocks")
    s.add_argument("--cloud", required=True)
    s.add_argument("--large", type=float, default=40.0)
    s.add_argument("--small", type=float, default=0.5)
    s.add_argument("--dump", help="directory for binary block dumps")
    s.add_argument("--out")
    s.set_defaults(func=cmd_voxelize)

    s = sub.add_parser("segment", help="label points Ground/ManMade/Vegetation")
    s.add_argument("--cloud", required=True)
    s.add_argument("--labeler", choices=["unet", "baseline", "import"], default="baseline")
    s.add_argument("--weights", help="weight bundle directory (unet labeler)")
    s.add_argument("--large", type=float, default=40.0)
    s.add_argument("--small", type=float, default=0.5)
    s.add_argument("--out", required=True)
    fmt(s)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("init-weights", help="write a randomly initialized U-Net weight bundle")
    s.add_argument("--levels", type=int, default=3)
    s.add_argument("--base-channels", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init_weights)

    s = sub.add_parser("trees", help="extract tree instances from a labeled cloud")
    s.add_argument("--cloud", required=True)
    s.add_argument("--table")
    s.add_argument("--zone", type=int, default=7)
    s.add_argument("--method", choices=["poisson", "kmeans"], default="poisson")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_trees)

    s = sub.add_parser("materials", help="classify orthophoto patches into a material vector map")
    s.add_argument("--ortho", required=True)
    s.add_argument("--meta")
    s.add_argument("--classifier", choices=["baseline", "import"], default="baseline")
    s.add_argument("--train-mask")
    s.add_argument("--predictions", help="vector map CSV supplying imported predictions")
    s.add_argument("--patch", type=float, default=5.0)
    s.add_argument("--stride", type=float, default=3.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_materials)

    s = sub.add_parser("mesh", help="split a mesh by class and flatten vegetation")
    s.add_argument("--mesh", required=True)
    s.add_argument("--cloud", required=True)
    s.add_argument("--radius", type=float, default=0.5)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("path", help="material-weighted A* path")
    s.add_argument("--map", required=True)
    s.add_argument("--meta")
    s.add_argument("--start", type=_pair, required=True)
    s.add_argument("--goal", type=_pair, required=True)
    s.add_argument("--extent", help="xmin,ymin,xmax,ymax (default: map bounds)")
    s.add_argument("--cell", type=float, default=1.0)
    s.add_argument("--road", type=float, default=0.2)
    s.add_argument("--soil", type=float, default=1.0)
    s.add_argument("--vegetation", type=float, default=1.0)
    s.add_argument("--pgm", help="optional weight/path debug image")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_path)

    s = sub.add_parser("run", help="run the whole pipeline from a JSON config")
    s.add_argument("--config")
    s.add_argument("--outdir")
    s.add_argument("--seed", type=int)
    s.add_argument("--labeler", choices=["unet", "baseline", "import"])
    s.add_argument("--weights")
    s.add_argument("--tree-method", dest="tree_method", choices=["poisson", "kmeans"])
    s.add_argument("--zone", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", help="compare predicted and true labels")
    s.add_argument("--pred", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="write a synthetic scene bundle with a run config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--slope", type=float, default=0.0)
    s.add_argument("--noise", type=int, default=500)
    s.add_argument("--spec", help="SceneSpec JSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # stage-tagged for every subcommand
        stage = getattr(exc, "stage", args.command)
        msg = str(exc)
        if not msg.startswith(f"[{stage}]"):
            msg = f"[{stage}] {msg}"
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
