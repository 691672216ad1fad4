from .ground import GroundElevationModel, build_ground_model, estimate_ground_model, fill_nearest
from .objio import ObjError, read_mesh, write_mesh
from .plyio import PlyError, read_point_cloud, write_point_cloud
from .raster import read_mask, read_raster, write_mask, write_raster
from .spatial import SpatialIndex
from .types import (
    MATERIAL_NAMES,
    TERRAIN_NAMES,
    CameraPoseSet,
    MaterialClass,
    Point3,
    PointCloud,
    Polygon2,
    Raster,
    TerrainClass,
    TriMesh,
)

build_index = SpatialIndex
