"""Vehicle shape space: meshes, SDF volumes, PCA basis, marching cubes."""
from .basis import (DimensionError, EmptyShapeError, ShapeBasis, fit_basis, fit_library_basis,
                    library_volumes, reconstruction_error)
from .deform import random_deltas, vertex_deform
from .marching import marching_cubes
from .mesh import MeshError, TriangleMesh, read_obj, write_obj
from .sdf import SdfVolume, SignAmbiguityError, mesh_to_sdf, signed_distance
from .vehicles import VEHICLE_CLASSES, Asset, AssetLibrary, build_library, procedural_vehicle

__all__ = [
    "Asset", "AssetLibrary", "DimensionError", "EmptyShapeError", "MeshError", "SdfVolume",
    "ShapeBasis", "SignAmbiguityError", "TriangleMesh", "VEHICLE_CLASSES", "build_library",
    "fit_basis", "fit_library_basis", "library_volumes", "marching_cubes", "mesh_to_sdf",
    "procedural_vehicle", "random_deltas", "read_obj", "reconstruction_error", "signed_distance",
    "vertex_deform", "write_obj",
]
