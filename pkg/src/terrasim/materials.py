"""Orthophoto patch grid, majority labels, baseline classifier and the material vector map."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import List, Protocol

import numpy as np

from .core.types import MATERIAL_NAMES, MaterialClass, Raster


@dataclass(frozen=True)
class PatchGridParams:
    size: float = 5.0
    stride: float = 3.0

    def __post_init__(self):
        if not (self.size > 0 and self.stride > 0):
            raise ValueError("patch size and stride must be positive")


@dataclass
class Patch:
    center: tuple
    window: tuple  # (row, col, h, w)
    pixels: np.ndarray


@dataclass
class MaterialVectorMap:
    xy: np.ndarray
    codes: np.ndarray
    stride: float
    patch: float

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def resolution(self) -> float:
        return self.stride


def _grid_centers(corner: float, extent: float, size: float, stride: float) -> np.ndarray:
    last = corner + extent - size / 2
    n = int(np.floor((last - (corner + size / 2)) / stride + 1e-9)) + 1
    return corner + size / 2 + stride * np.arange(max(n, 0))


def crop_patches(ortho: Raster, params: PatchGridParams = PatchGridParams()) -> List[Patch]:
    """Fully-inside square windows on a stride grid, row-major (y outer, x inner)."""
    res = ortho.resolution
    px = int(round(params.size / res))
    if px < 1:
        raise ValueError(f"patch of {params.size} m is smaller than one {res} m pixel")
    cx0, cy0 = ortho.corner
    xs = _grid_centers(cx0, ortho.width * res, params.size, params.stride)
    ys = _grid_centers(cy0, ortho.height * res, params.size, params.stride)
    patches = []
    for y in ys:
        row = int(round((y - params.size / 2 - cy0) / res))
        if row < 0 or row + px > ortho.height:
            continue
        for x in xs:
            col = int(round((x - params.size / 2 - cx0) / res))
            if col < 0 or col + px > ortho.width:
                continue
            patches.append(Patch((float(x), float(y)), (row, col, px, px),
                                 ortho.pixels[row:row + px, col:col + px]))
    return patches


def majority_label(mask_pixels) -> MaterialClass:
    codes = np.asarray(mask_pixels).ravel()
    if codes.size == 0:
        raise ValueError("empty mask patch")
    return MaterialClass(int(np.argmax(np.bincount(codes, minlength=3)[:3])))


def build_patch_dataset(ortho: Raster, mask: Raster, params: PatchGridParams = PatchGridParams()):
    """Patches labeled by mask majority; returns ``(patches, labels, counts_by_class_name)``."""
    if not ortho.same_geometry(mask):
        raise ValueError("orthophoto and mask rasters differ in size, resolution or origin")
    patches = crop_patches(ortho, params)
    labels = []
    for p in patches:
        r, c, h, w = p.window
        labels.append(majority_label(mask.pixels[r:r + h, c:c + w]))
    counts = {MATERIAL_NAMES[m]: sum(1 for l in labels if l == m) for m in MaterialClass}
    return patches, labels, counts


def patch_features(pixels) -> np.ndarray:
    """Mean RGB, RGB std-dev, and mean luma gradient magnitude (interior central differences)."""
    px = np.asarray(pixels, dtype=np.float64)
    flat = px.reshape(-1, 3)
    luma = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    if luma.shape[0] >= 3 and luma.shape[1] >= 3:
        gx = (luma[1:-1, 2:] - luma[1:-1, :-2]) / 2.0
        gy = (luma[2:, 1:-1] - luma[:-2, 1:-1]) / 2.0
        grad = float(np.mean(np.hypot(gx, gy)))
    else:
        grad = 0.0
    return np.concatenate([flat.mean(axis=0), flat.std(axis=0), [grad]])


class PatchClassifier(Protocol):
    def classify(self, patch: Patch) -> MaterialClass: ...


@dataclass
class CentroidModel:
    mean: np.ndarray
    scale: np.ndarray
    centroids: np.ndarray

    def classify(self, patch: Patch) -> MaterialClass:
        return classify_patch(self, patch)


def fit_baseline(patches, labels) -> CentroidModel:
    labels = np.asarray([int(l) for l in labels])
    present = set(labels.tolist())
    missing = [MATERIAL_NAMES[m] for m in MaterialClass if m not in present]
    if missing:
        raise ValueError(f"baseline fit needs every class; missing {', '.join(missing)}")
    feats = np.array([patch_features(p.pixels if isinstance(p, Patch) else p) for p in patches])
    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale[scale == 0] = 1.0
    z = (feats - mean) / scale
    centroids = np.array([z[labels == m].mean(axis=0) for m in MaterialClass])
    return CentroidModel(mean, scale, centroids)


def classify_patch(model: CentroidModel, patch) -> MaterialClass:
    pixels = patch.pixels if isinstance(patch, Patch) else patch
    z = (patch_features(pixels) - model.mean) / model.scale
    return MaterialClass(int(np.argmin(np.linalg.norm(model.centroids - z, axis=1))))


class ImportClassifier:
    """Pass-through classifier keyed by patch center (from an existing vector map)."""

    def __init__(self, vmap: MaterialVectorMap, tol: float = 1e-6):
        self._lookup = {(round(x / tol), round(y / tol)): int(c)
                        for (x, y), c in zip(vmap.xy, vmap.codes)}
        self._tol = tol

    def classify(self, patch: Patch) -> MaterialClass:
        key = (round(patch.center[0] / self._tol), round(patch.center[1] / self._tol))
        if key not in self._lookup:
            raise KeyError(f"no imported prediction for patch centered at {patch.center}")
        return MaterialClass(self._lookup[key])


def build_vector_map(ortho: Raster, classifier: PatchClassifier,
                     params: PatchGridParams = PatchGridParams()) -> MaterialVectorMap:
    patches = crop_patches(ortho, params)
    xy = np.array([p.center for p in patches], dtype=np.float64).reshape(-1, 2)
    codes = np.array([int(classifier.classify(p)) for p in patches], dtype=np.uint8)
    return MaterialVectorMap(xy, codes, params.stride, params.size)


def write_vector_map(vmap: MaterialVectorMap, path, meta_path=None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "material_code"])
        for (x, y), c in zip(vmap.xy, vmap.codes):
            w.writerow([repr(float(x)), repr(float(y)), int(c)])
    meta = {"stride_m": vmap.stride, "patch_m": vmap.patch, "class_names": list(MATERIAL_NAMES)}
    with open(meta_path or _meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)


def _meta_path(path) -> str:
    p = str(path)
    return (p[:-4] if p.endswith(".csv") else p) + ".json"


def read_vector_map(path, meta_path=None) -> MaterialVectorMap:
    with open(meta_path or _meta_path(path), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    xy, codes = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            try:
                xy.append((float(row["x"]), float(row["y"])))
                code = int(row["material_code"])
            except (KeyError, TypeError, ValueError):
                raise ValueError(f"{path} line {line}: expected x,y,material_code") from None
            if code not in (0, 1, 2):
                raise ValueError(f"{path} line {line}: material code {code} outside 0..2")
            codes.append(code)
    return MaterialVectorMap(np.array(xy, dtype=np.float64).reshape(-1, 2),
                             np.array(codes, dtype=np.uint8), float(meta["stride_m"]),
                             float(meta["patch_m"]))


def synth_texture_patches(n_per_class: int, seed: int = 0, px: int = 20):
    """Three synthetic textures: flat gray soil, dark smooth road, noisy green vegetation."""
    rng = np.random.default_rng(seed)
    patches, labels = [], []
    recipes = {
        MaterialClass.BARE_SOIL: ((150, 140, 125), 10.0, 15.0),
        MaterialClass.ROAD: ((60, 60, 64), 3.0, 8.0),
        MaterialClass.VEGETATION: ((60, 140, 50), 40.0, 25.0),
    }
    for m, (base, sigma, jitter) in recipes.items():
        for _ in range(n_per_class):
            tint = np.array(base) + rng.normal(0, jitter, 3)
            img = tint + rng.normal(0, sigma, (px, px, 3))
            patches.append(np.clip(img, 0, 255).astype(np.uint8))
            labels.append(m)
    return patches, labels
