"""3D U-Net inference over single-channel occupancy grids."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .. import kernels

WEIGHTS_FORMAT = "terrasim-unet-weights"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class UNetConfig:
    levels: int = 3
    base_channels: int = 16
    kernel_size: int = 3
    pool_factor: int = 2
    convs_per_level: int = 2
    classes: int = 3
    dropout: float = 0.5
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.classes != 3:
            raise ValueError("the terrain head has exactly 3 classes")
        if self.levels < 0 or self.base_channels < 1 or self.convs_per_level < 1:
            raise ValueError("levels >= 0, base_channels >= 1 and convs_per_level >= 1 required")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.pool_factor < 2:
            raise ValueError("pool factor must be at least 2")

    def width(self, level: int) -> int:
        return self.base_channels * 2 ** level


def conv_layers(config: UNetConfig):
    """Ordered (layer name, in channels, out channels) for every conv+BN+ReLU unit."""
    layers = []

    def block(prefix, cin, cout):
        for i in range(config.convs_per_level):
            layers.append((f"{prefix}.conv{i}", cin if i == 0 else cout, cout))

    cin = 1
    for level in range(config.levels):
        block(f"enc{level}", cin, config.width(level))
        cin = config.width(level)
    block("bottleneck", cin, config.width(config.levels))
    for level in reversed(range(config.levels)):
        block(f"dec{level}", config.width(level) + config.width(level + 1), config.width(level))
    return layers


def tensor_shapes(config: UNetConfig) -> dict:
    k = config.kernel_size
    shapes = {}
    for name, cin, cout in conv_layers(config):
        shapes[f"{name}.weight"] = (k, k, k, cin, cout)
        shapes[f"{name}.bias"] = (cout,)
        for p in ("gamma", "beta", "mean", "var"):
            shapes[f"{name}.bn.{p}"] = (cout,)
    shapes["head.weight"] = (1, 1, 1, config.width(0), config.classes)
    shapes["head.bias"] = (config.classes,)
    return shapes


@dataclass
class WeightBundle:
    config: UNetConfig
    tensors: dict

    def check(self) -> None:
        """Raise naming the first layer whose tensor is missing or misshapen."""
        for name, shape in tensor_shapes(self.config).items():
            if name not in self.tensors:
                raise ValueError(f"weight bundle is missing layer tensor {name!r}")
            got = tuple(np.shape(self.tensors[name]))
            if got != shape:
                raise ValueError(f"layer tensor {name!r} has shape {got}, expected {shape}")
            if name.endswith(".bn.var") and np.any(np.asarray(self.tensors[name]) < 0):
                raise ValueError(f"layer tensor {name!r} has negative variance")

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        entries = []
        offset = 0
        with open(os.path.join(directory, "weights.bin"), "wb") as fh:
            for name, shape in tensor_shapes(self.config).items():
                raw = np.ascontiguousarray(self.tensors[name], dtype="<f4").tobytes()
                fh.write(raw)
                entries.append({"name": name, "shape": list(shape), "dtype": "float32",
                                "offset": offset, "nbytes": len(raw)})
                offset += len(raw)
        manifest = {"format": WEIGHTS_FORMAT, "version": WEIGHTS_VERSION,
                    "byte_order": "little", "config": asdict(self.config), "tensors": entries}
        with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)

    @classmethod
    def load(cls, directory) -> "WeightBundle":
        with open(os.path.join(directory, "manifest.json"), "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format") != WEIGHTS_FORMAT:
            raise ValueError(f"{directory}: not a {WEIGHTS_FORMAT} manifest")
        if manifest.get("version") != WEIGHTS_VERSION:
            raise ValueError(f"{directory}: unsupported manifest version {manifest.get('version')}")
        config = UNetConfig(**manifest["config"])
        with open(os.path.join(directory, "weights.bin"), "rb") as fh:
            blob = fh.read()
        tensors = {}
        for entry in manifest["tensors"]:
            if entry.get("dtype", "float32") != "float32":
                raise ValueError(f"tensor {entry['name']!r}: only float32 is supported")
            end = entry["offset"] + entry["nbytes"]
            if end > len(blob):
                raise ValueError(f"tensor {entry['name']!r} runs past the end of weights.bin")
            arr = np.frombuffer(blob, dtype="<f4", count=entry["nbytes"] // 4, offset=entry["offset"])
            tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float32)
        bundle = cls(config, tensors)
        bundle.check()
        return bundle


def init_weights(config: UNetConfig, seed: int = 0) -> WeightBundle:
    """He-initialized random weights; handy for smoke tests and benchmarks."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(config).items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(shape[:4]))
            tensors[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
        elif name.endswith(".bn.gamma"):
            tensors[name] = rng.uniform(0.8, 1.2, shape).astype(np.float32)
        elif name.endswith(".bn.var"):
            tensors[name] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        else:
            tensors[name] = (0.05 * rng.standard_normal(shape)).astype(np.float32)
    return WeightBundle(config, tensors)


def _unit(x, t, name, eps):
    x = kernels.conv3d(x, t[f"{name}.weight"], t[f"{name}.bias"])
    x = kernels.batchnorm_infer(x, t[f"{name}.bn.gamma"], t[f"{name}.bn.beta"],
                                t[f"{name}.bn.mean"], t[f"{name}.bn.var"], eps)
    return kernels.relu(x)


def unet_forward(occupancy, weights: WeightBundle, config: UNetConfig = None) -> np.ndarray:
    """Per-cell class probabilities (X, Y, Z, 3) for an (X, Y, Z, 1) occupancy tensor.

    Dropout is the identity at inference, so the output is a pure function of
    the input and the weights.
    """
    config = config or weights.config
    if config != weights.config:
        raise ValueError("weight bundle was built for a different UNetConfig")
    x = np.asarray(occupancy, dtype=np.float32)
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim != 4 or x.shape[3] != 1:
        raise ValueError(f"input must be an (X, Y, Z, 1) occupancy tensor, got {x.shape}")
    step = config.pool_factor ** config.levels
    if any(s % step for s in x.shape[:3]):
        raise ValueError(f"input dims {x.shape[:3]} must be divisible by {step}")
    weights.check()
    t = weights.tensors

    def run_block(x, prefix):
        for i in range(config.convs_per_level):
            x = _unit(x, t, f"{prefix}.conv{i}", config.bn_eps)
        return x

    skips = []
    for level in range(config.levels):
        x = run_block(x, f"enc{level}")
        skips.append(x)
        x = kernels.maxpool3d(x, config.pool_factor)
    x = run_block(x, "bottleneck")
    for level in reversed(range(config.levels)):
        x = kernels.upsample_concat(x, skips[level], config.pool_factor)
        x = run_block(x, f"dec{level}")
    logits = kernels.conv3d(x, t["head.weight"], t["head.bias"])
    return kernels.softmax(logits, axis=-1).astype(np.float32)
