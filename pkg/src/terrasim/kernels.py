"""Validated tensor and geometry kernels with a compiled backend when available.

The Cython extension is used if it imports; set ``TERRASIM_BACKEND=python`` to
force the numpy fallback. Dense convolutions always go through the numpy path
(BLAS beats the compiled loop there); the compiled conv3d skips zero inputs and
is picked for sparse tensors such as raw occupancy grids.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("TERRASIM_BACKEND", "").lower() == "python":
        raise ImportError("python backend forced")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
else:
    try:
        from . import _ckernels

        BACKENDS["cython"] = _ckernels
    except ImportError:
        pass


def _backend(name):
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


# nonzero fraction below which the compiled sparse-skipping conv3d is faster
SPARSE_CONV_DENSITY = 0.15


def _as_tensor4(x, what="input"):
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 4 or min(x.shape) < 1:
        raise ValueError(f"{what} must be a non-empty (X, Y, Z, C) tensor, got shape {x.shape}")
    return np.ascontiguousarray(x)


def conv3d(x, kernel, bias, backend=None):
    """Same-padded (zero fill), stride-1 3D cross-correlation.

    ``kernel`` has shape (k, k, k, C_in, C_out) with odd k; ``bias`` has C_out entries.
    """
    x = _as_tensor4(x)
    w = np.ascontiguousarray(np.asarray(kernel, dtype=np.float32))
    b = np.ascontiguousarray(np.asarray(bias, dtype=np.float32).reshape(-1))
    if w.ndim != 5 or not (w.shape[0] == w.shape[1] == w.shape[2]):
        raise ValueError(f"kernel must be (k, k, k, C_in, C_out), got {w.shape}")
    if w.shape[0] % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {w.shape[0]}")
    if w.shape[3] != x.shape[3]:
        raise ValueError(f"kernel expects {w.shape[3]} input channels, input has {x.shape[3]}")
    if b.shape[0] != w.shape[4]:
        raise ValueError(f"bias has {b.shape[0]} entries, kernel has {w.shape[4]} outputs")
    if backend is None:
        if BACKEND == "cython" and np.count_nonzero(x) < SPARSE_CONV_DENSITY * x.size:
            return _impl.conv3d(x, w, b)
        return _pykernels.conv3d(x, w, b)
    return _backend(backend).conv3d(x, w, b)


def maxpool3d(x, factor=2, backend=None):
    x = _as_tensor4(x)
    if factor < 1 or any(s % factor for s in x.shape[:3]):
        raise ValueError(f"spatial dims {x.shape[:3]} not divisible by pool factor {factor}")
    return _backend(backend).maxpool3d(x, int(factor))


def upsample_concat(low, skip, factor=2):
    """Nearest-neighbor upsample of ``low``, concatenated after the ``skip`` channels."""
    low = _as_tensor4(low, "low")
    skip = _as_tensor4(skip, "skip")
    if tuple(s * factor for s in low.shape[:3]) != skip.shape[:3]:
        raise ValueError(
            f"upsampled low dims {tuple(s * factor for s in low.shape[:3])} "
            f"do not match skip dims {skip.shape[:3]}")
    up = low.repeat(factor, axis=0).repeat(factor, axis=1).repeat(factor, axis=2)
    return np.concatenate([skip, up], axis=3)


def batchnorm_infer(x, gamma, beta, mean, var, eps=1e-5):
    x = _as_tensor4(x)
    c = x.shape[3]
    params = [np.asarray(p, dtype=np.float32).reshape(-1) for p in (gamma, beta, mean, var)]
    for name, p in zip(("gamma", "beta", "mean", "var"), params):
        if p.shape[0] != c:
            raise ValueError(f"batchnorm {name} has {p.shape[0]} entries, input has {c} channels")
    gamma, beta, mean, var = params
    if np.any(var < 0):
        raise ValueError("batchnorm variance must be non-negative")
    scale = gamma / np.sqrt(var + np.float32(eps))
    return (x - mean) * scale + beta


def relu(x):
    return np.maximum(x, 0, dtype=np.float32)


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def cylinder_min_z(query_xy, ref_xyz, radius, backend=None):
    """Per query, the minimum z of reference points within XY distance ``radius`` (inf if none)."""
    if not radius > 0:
        raise ValueError("cylinder radius must be positive")
    q = np.ascontiguousarray(np.asarray(query_xy, dtype=np.float64).reshape(-1, 2))
    ref = np.ascontiguousarray(np.asarray(ref_xyz, dtype=np.float64).reshape(-1, 3))
    return _backend(backend).cylinder_min_z(q, ref, float(radius))
