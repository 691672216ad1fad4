"""Wavefront OBJ reader/writer limited to ``v`` and ``f`` records."""
from __future__ import annotations

import os

import numpy as np

from .types import TriMesh


class ObjError(ValueError):
    """Malformed OBJ input."""


def read_mesh(path) -> TriMesh:
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise ObjError(f"line {line_no}: vertex needs 3 coordinates")
                try:
                    vertices.append((float(tokens[1]), float(tokens[2]), float(tokens[3])))
                except ValueError as exc:
                    raise ObjError(f"line {line_no}: {exc}") from None
            elif tokens[0] == "f":
                idx = []
                for tok in tokens[1:]:
                    try:
                        i = int(tok.split("/")[0])
                    except ValueError:
                        raise ObjError(f"line {line_no}: bad face index {tok!r}") from None
                    # negative indices are relative to the vertices read so far
                    i = i - 1 if i > 0 else len(vertices) + i
                    if i < 0 or i >= len(vertices):
                        raise ObjError(f"line {line_no}: face index {tok} out of range")
                    idx.append(i)
                if len(idx) < 3:
                    raise ObjError(f"line {line_no}: face needs at least 3 vertices")
                for k in range(1, len(idx) - 1):
                    tri = (idx[0], idx[k], idx[k + 1])
                    if len(set(tri)) == 3:
                        faces.append(tri)
    return TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                   np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_mesh(mesh: TriMesh, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        if len(mesh.vertices):
            np.savetxt(fh, mesh.vertices, fmt="v %.6f %.6f %.6f")
        if len(mesh.faces):
            np.savetxt(fh, mesh.faces + 1, fmt="f %d %d %d")
