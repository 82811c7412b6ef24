"""Multilayer rotating shallow water on unstructured C-grids.

TRiSK-style mimetic finite-volume spatial discretization with explicit
Runge-Kutta and exponential (ETD) time integrators whose matrix
phi-functions are evaluated by weighted Arnoldi / skew-Lanczos Krylov
methods, including a barotropic layer reduction and spectral artificial
dissipation.
"""

from mlswe.mesh import Mesh, build_planar_hex_mesh, build_spherical_mesh
from mlswe.state import LayeredState, ModelConfig

__all__ = [
    "Mesh",
    "build_planar_hex_mesh",
    "build_spherical_mesh",
    "LayeredState",
    "ModelConfig",
]

__version__ = "0.1.0"
