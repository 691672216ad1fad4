"""Raster I/O: PNG or binary PPM pixels plus a JSON georeference sidecar."""
from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from .types import Raster

# mask palette: BareSoil, Road, Vegetation
MASK_PALETTE = [(160, 120, 80), (60, 60, 60), (40, 160, 40)]


def _save_image(pixels: np.ndarray, path) -> None:
    # rows grow with +y; images are stored north-up
    Image.fromarray(np.ascontiguousarray(pixels[::-1])).save(path)


def write_raster(raster: Raster, path, meta_path=None) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    _save_image(raster.pixels.astype(np.uint8), path)
    write_raster_meta(raster, meta_path or default_meta_path(path))


def write_raster_meta(raster: Raster, meta_path) -> None:
    meta = {
        "origin_x": raster.origin[0],
        "origin_y": raster.origin[1],
        "resolution_m_per_px": raster.resolution,
    }
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)


def default_meta_path(path) -> str:
    return os.path.splitext(str(path))[0] + ".json"


def read_raster_meta(meta_path) -> dict:
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    for key in ("origin_x", "origin_y", "resolution_m_per_px"):
        if key not in meta:
            raise ValueError(f"{meta_path}: raster sidecar is missing {key!r}")
    return meta


def read_raster(path, meta_path=None) -> Raster:
    meta = read_raster_meta(meta_path or default_meta_path(path))
    with Image.open(path) as img:
        if img.mode == "P":
            pixels = np.array(img)
        else:
            pixels = np.array(img.convert("RGB"))
    return Raster(pixels[::-1].copy(), float(meta["resolution_m_per_px"]),
                  (float(meta["origin_x"]), float(meta["origin_y"])))


def write_mask(mask: Raster, path, meta_path=None) -> None:
    """Paletted PNG whose pixel indices are MaterialClass codes 0/1/2."""
    codes = np.asarray(mask.pixels, dtype=np.uint8)
    if codes.ndim != 2 or codes.max(initial=0) > 2:
        raise ValueError("mask raster must be single-band with codes 0..2")
    flipped = np.ascontiguousarray(codes[::-1])
    img = Image.frombytes("P", (flipped.shape[1], flipped.shape[0]), flipped.tobytes())
    img.putpalette([c for rgb in MASK_PALETTE for c in rgb] + [0] * (768 - 9))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    img.save(path)
    write_raster_meta(mask, meta_path or default_meta_path(path))


def read_mask(path, meta_path=None) -> Raster:
    meta = read_raster_meta(meta_path or default_meta_path(path))
    with Image.open(path) as img:
        if img.mode != "P":
            raise ValueError(f"{path}: mask must be a paletted PNG with codes 0/1/2")
        codes = np.array(img)
    if codes.max(initial=0) > 2:
        raise ValueError(f"{path}: mask holds codes outside 0..2")
    return Raster(codes[::-1].copy(), float(meta["resolution_m_per_px"]),
                  (float(meta["origin_x"]), float(meta["origin_y"])))
