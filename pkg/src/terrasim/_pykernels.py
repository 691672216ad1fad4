"""Pure numpy/scipy implementations of the hot kernels (fallback backend)."""
import numpy as np
from scipy.spatial import cKDTree


def conv3d(x, w, b):
    X, Y, Z, _ = x.shape
    k = w.shape[0]
    r = k // 2
    cout = w.shape[4]
    padded = np.pad(x, ((r, r), (r, r), (r, r), (0, 0)))
    out = np.empty((X, Y, Z, cout), dtype=np.float32)
    out[...] = b
    for i in range(k):
        for j in range(k):
            for l in range(k):
                window = padded[i:i + X, j:j + Y, l:l + Z, :]
                out += window @ w[i, j, l]
    return out


def maxpool3d(x, f):
    X, Y, Z, C = x.shape
    v = x.reshape(X // f, f, Y // f, f, Z // f, f, C)
    return v.max(axis=(1, 3, 5))


def cylinder_min_z(query_xy, ref_xyz, radius):
    out = np.full(len(query_xy), np.inf)
    if len(ref_xyz) == 0 or len(query_xy) == 0:
        return out
    tree = cKDTree(ref_xyz[:, :2])
    z = ref_xyz[:, 2]
    r2 = radius * radius
    chunk = 20000
    for start in range(0, len(query_xy), chunk):
        q = query_xy[start:start + chunk]
        hits = tree.query_ball_point(q, radius * (1 + 1e-12), return_sorted=False)
        for i, idx in enumerate(hits):
            if not idx:
                continue
            idx = np.asarray(idx, dtype=np.int64)
            d2 = np.sum((ref_xyz[idx, :2] - q[i]) ** 2, axis=1)
            sel = z[idx][d2 <= r2]
            if sel.size:
                out[start + i] = sel.min()
    return out
