"""Per-layer wet/dry masks from bathymetry and reference interfaces.

A cell is dry in layer k when the rest interface configuration gives it
zero thickness there; every edge touching a dry cell is treated as a
boundary edge whose velocity DOF is pinned to zero (which also removes
it from the tangential reconstruction, i.e. an effective no-slip wall).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from mlswe.mesh.core import Mesh


class DryLayerError(Exception):
    """A layer has no wet cells at all (degenerate configuration)."""


def rest_interfaces(bathymetry: np.ndarray, eta0: np.ndarray) -> np.ndarray:
    """Rest interface heights eta_k = max(b, eta0_k), shape (L+1, nc);
    the last row is the bathymetry itself."""
    eta0 = np.asarray(eta0, dtype=float)
    L = len(eta0)
    out = np.empty((L + 1, len(bathymetry)))
    for k in range(L):
        out[k] = np.maximum(bathymetry, eta0[k])
    out[L] = bathymetry
    return out


def rest_thickness(bathymetry: np.ndarray, eta0: np.ndarray) -> np.ndarray:
    """Rest layer thicknesses h0_k >= 0, shape (L, nc)."""
    eta = rest_interfaces(bathymetry, eta0)
    return eta[:-1] - eta[1:]


@dataclasses.dataclass
class LayerMasks:
    cell_wet: np.ndarray    # (L, n_cells) bool
    edge_wet: np.ndarray    # (L, n_edges) bool
    vertex_wet: np.ndarray  # (L, n_vertices) bool: touches a wet edge

    @property
    def n_layers(self) -> int:
        return self.cell_wet.shape[0]

    def zero_dry(self, h: np.ndarray, u: np.ndarray) -> None:
        h[~self.cell_wet] = 0.0
        u[~self.edge_wet] = 0.0


def all_wet(mesh: Mesh, n_layers: int) -> LayerMasks:
    return LayerMasks(
        cell_wet=np.ones((n_layers, mesh.n_cells), dtype=bool),
        edge_wet=np.ones((n_layers, mesh.n_edges), dtype=bool),
        vertex_wet=np.ones((n_layers, mesh.n_vertices), dtype=bool),
    )


def apply_dry_mask(mesh: Mesh, bathymetry: np.ndarray,
                   eta0: np.ndarray) -> LayerMasks:
    """Per-layer masks for the given bathymetry and reference interfaces.

    Cells with zero rest thickness are dry; an edge is wet only when both
    adjacent cells are wet (and the mesh itself marks it interior).
    Raises DryLayerError when a whole layer is dry.
    """
    h0 = rest_thickness(bathymetry, eta0)
    L = h0.shape[0]
    cell_wet = (h0 > 0.0) & ~mesh.cell_is_dry

    for k in range(L):
        if not cell_wet[k].any():
            raise DryLayerError(f"layer {k} is entirely dry")

    coe = mesh.cells_on_edge
    edge_wet = np.empty((L, mesh.n_edges), dtype=bool)
    for k in range(L):
        both = cell_wet[k][coe[:, 0]] & cell_wet[k][coe[:, 1]]
        both &= (coe >= 0).all(axis=1)
        edge_wet[k] = both & ~mesh.edge_is_boundary

    vertex_wet = np.zeros((L, mesh.n_vertices), dtype=bool)
    for k in range(L):
        ok = mesh.eov_valid & edge_wet[k][mesh.eov_idx]
        vertex_wet[k] = ok.any(axis=1)

    return LayerMasks(cell_wet=cell_wet, edge_wet=edge_wet,
                      vertex_wet=vertex_wet)
