"""Turn photogrammetric terrain products into simulation-ready semantic data."""
from .core import (
    CameraPoseSet,
    MaterialClass,
    PointCloud,
    Polygon2,
    Raster,
    TerrainClass,
    TriMesh,
    read_mesh,
    read_point_cloud,
    write_mesh,
    write_point_cloud,
)
from .kernels import BACKEND

__version__ = "0.1.0"
