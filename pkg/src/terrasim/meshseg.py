"""Label transfer from the segmented cloud onto the photogrammetric mesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.ground import GroundElevationModel
from .core.spatial import SpatialIndex
from .core.types import PointCloud, TerrainClass, TriMesh

UNASSIGNED = -1


@dataclass(frozen=True)
class MeshSegParams:
    radius: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("match radius must be positive")


def vertex_classes(mesh: TriMesh, cloud: PointCloud, params: MeshSegParams = MeshSegParams()):
    """Class of each vertex's nearest cloud point within the radius, else -1."""
    if len(cloud) == 0:
        raise ValueError("cannot segment a mesh against an empty cloud")
    if cloud.labels is None:
        raise ValueError("mesh segmentation needs a labeled cloud")
    idx, dist = SpatialIndex(cloud.xyz).nearest_many(mesh.vertices)
    cls = cloud.labels[idx].astype(np.int64)
    cls[dist > params.radius] = UNASSIGNED
    return cls


def submesh(mesh: TriMesh, face_mask) -> TriMesh:
    """Selected faces with vertices re-indexed compactly in original order."""
    faces = mesh.faces[np.asarray(face_mask, dtype=bool)]
    used = np.unique(faces)
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriMesh(mesh.vertices[used], remap[faces])


def segment_mesh(mesh: TriMesh, cloud: PointCloud, params: MeshSegParams = MeshSegParams()):
    """Per-class submeshes; a face is kept for class c only if all its vertices are c.

    Returns ``({TerrainClass: TriMesh}, vertex_classes)``.
    """
    cls = vertex_classes(mesh, cloud, params)
    fc = cls[mesh.faces]
    parts = {}
    for c in TerrainClass:
        parts[c] = submesh(mesh, np.all(fc == int(c), axis=1))
    return parts, cls


def flatten_trees(mesh: TriMesh, vegetation_vertices, ground_model: GroundElevationModel) -> TriMesh:
    """Drop the given vertices onto the ground model; XY and connectivity unchanged."""
    verts = mesh.vertices.copy()
    idx = np.asarray(vegetation_vertices, dtype=np.int64).ravel()
    if idx.size:
        verts[idx, 2] = ground_model.elevation_at(verts[idx, 0], verts[idx, 1])
    return TriMesh(verts, mesh.faces.copy())
