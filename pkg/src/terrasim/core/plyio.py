"""PLY 1.0 point cloud reader/writer (ascii and binary_little_endian)."""
from __future__ import annotations

import os

import numpy as np

from .types import DEFAULT_COLOR, PointCloud

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    """Malformed or unsupported PLY input."""


def _parse_header(fh):
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise PlyError("line 1: missing 'ply' magic")
    fmt = None
    elements = []  # [name, count, [(prop, dtype|None for list)]]
    line_no = 1
    while True:
        raw = fh.readline()
        line_no += 1
        if not raw:
            raise PlyError(f"line {line_no}: header not terminated by end_header")
        tokens = raw.decode("ascii", errors="replace").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "format":
            if len(tokens) != 3 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"line {line_no}: unsupported format {' '.join(tokens[1:])!r}")
            fmt = tokens[1]
        elif key == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise PlyError(f"line {line_no}: malformed element declaration")
            elements.append([tokens[1], int(tokens[2]), []])
        elif key == "property":
            if not elements:
                raise PlyError(f"line {line_no}: property before any element")
            if tokens[1] == "list":
                if len(tokens) != 5:
                    raise PlyError(f"line {line_no}: malformed list property")
                elements[-1][2].append((tokens[4], None))
            else:
                if len(tokens) != 3 or tokens[1] not in _PLY_TYPES:
                    raise PlyError(f"line {line_no}: unknown property type in {raw!r}")
                elements[-1][2].append((tokens[2], _PLY_TYPES[tokens[1]]))
        elif key == "end_header":
            break
        else:
            raise PlyError(f"line {line_no}: unexpected header keyword {key!r}")
    if fmt is None:
        raise PlyError("header has no format line")
    return fmt, elements, line_no


def read_point_cloud(path) -> PointCloud:
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _parse_header(fh)
        data_start = fh.tell()
        body = fh.read()

    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise PlyError("no 'vertex' element in header")
    vi = names.index("vertex")
    _, count, props = elements[vi]
    prop_names = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in prop_names:
            raise PlyError(f"vertex element is missing property {axis!r}")
    if any(dt is None for _, dt in props):
        raise PlyError("list properties on the vertex element are not supported")

    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        # every entry of a preceding element occupies one line
        skip = sum(e[1] for e in elements[:vi])
        rows = lines[skip:skip + count]
        if len(rows) < count:
            raise PlyError(
                f"line {header_lines + skip + len(rows) + 1}: expected {count} vertex rows, "
                f"found {len(rows)}"
            )
        table = np.empty((count, len(props)), dtype=np.float64)
        for i, row in enumerate(rows):
            vals = row.split()
            if len(vals) != len(props):
                raise PlyError(
                    f"line {header_lines + skip + i + 1}: expected {len(props)} values, got {len(vals)}"
                )
            try:
                table[i] = [float(v) for v in vals]
            except ValueError as exc:
                raise PlyError(f"line {header_lines + skip + i + 1}: {exc}") from None
        cols = {name: table[:, j] for j, name in enumerate(prop_names)}
        bad = ~np.all(np.isfinite(table[:, [prop_names.index(a) for a in "xyz"]]), axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise PlyError(f"line {header_lines + skip + i + 1}: non-finite coordinate")
    else:
        offset = 0
        for name, n, eprops in elements[:vi]:
            if any(dt is None for _, dt in eprops):
                raise PlyError(f"binary element {name!r} with list properties precedes vertex")
            offset += n * np.dtype([(p, "<" + dt) for p, dt in eprops]).itemsize
        dtype = np.dtype([(p, "<" + dt) for p, dt in props])
        need = offset + count * dtype.itemsize
        if len(body) < need:
            raise PlyError(
                f"byte offset {data_start + len(body)}: vertex data truncated, "
                f"need {need} bytes after header, have {len(body)}"
            )
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=offset)
        cols = {name: arr[name] for name in prop_names}
        bad = ~(np.isfinite(cols["x"]) & np.isfinite(cols["y"]) & np.isfinite(cols["z"]))
        if bad.any():
            i = int(np.argmax(bad))
            raise PlyError(
                f"byte offset {data_start + offset + i * dtype.itemsize}: non-finite coordinate"
            )

    xyz = np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float64)
    if all(c in cols for c in ("red", "green", "blue")):
        rgb = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1)
        rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    else:
        rgb = np.tile(np.array(DEFAULT_COLOR, dtype=np.uint8), (count, 1))
    labels = None
    if "label" in cols:
        labels = np.asarray(cols["label"]).astype(np.int64)
        if labels.size and (labels.min() < 0 or labels.max() > 2):
            raise PlyError("label property holds values outside 0..2")
    return PointCloud(xyz, rgb, labels)


def write_point_cloud(cloud: PointCloud, path, format: str = "binary-little-endian") -> None:
    fmt = {"ascii": "ascii", "binary-little-endian": "binary_little_endian",
           "binary_little_endian": "binary_little_endian", "binary": "binary_little_endian"}.get(format)
    if fmt is None:
        raise ValueError(f"unknown PLY format {format!r}")
    n = len(cloud)
    has_labels = cloud.labels is not None
    header = [
        "ply",
        f"format {fmt} 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ]
    if has_labels:
        header.append("property uchar label")
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(head)
        if fmt == "ascii":
            fields = [cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2],
                      cloud.rgb[:, 0], cloud.rgb[:, 1], cloud.rgb[:, 2]]
            spec = "%.6f %.6f %.6f %d %d %d"
            if has_labels:
                fields.append(cloud.labels)
                spec += " %d"
            if n:
                table = np.column_stack([np.asarray(f, dtype=np.float64) for f in fields])
                np.savetxt(fh, table, fmt=spec.split(" "), delimiter=" ")
        else:
            cols = [("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                    ("red", "u1"), ("green", "u1"), ("blue", "u1")]
            if has_labels:
                cols.append(("label", "u1"))
            arr = np.empty(n, dtype=np.dtype(cols))
            arr["x"], arr["y"], arr["z"] = cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]
            arr["red"], arr["green"], arr["blue"] = cloud.rgb[:, 0], cloud.rgb[:, 1], cloud.rgb[:, 2]
            if has_labels:
                arr["label"] = cloud.labels
            fh.write(arr.tobytes())
