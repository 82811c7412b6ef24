from mlswe.mesh.core import (
    PLANAR,
    SPHERE,
    Mesh,
    MeshValidationError,
    validate_mesh,
    weight_relation_residual,
)
from mlswe.mesh.planar import build_planar_hex_mesh
from mlswe.mesh.sphere import build_spherical_mesh
from mlswe.mesh.weights import compute_edge_weights
from mlswe.mesh.masks import LayerMasks, apply_dry_mask
from mlswe.mesh.io import load_mesh, save_mesh

__all__ = [
    "PLANAR",
    "SPHERE",
    "Mesh",
    "MeshValidationError",
    "validate_mesh",
    "weight_relation_residual",
    "build_planar_hex_mesh",
    "build_spherical_mesh",
    "compute_edge_weights",
    "LayerMasks",
    "apply_dry_mask",
    "load_mesh",
    "save_mesh",
]
