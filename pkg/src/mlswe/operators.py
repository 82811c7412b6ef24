"""Matrix-free TRiSK operator kernels.

Each kernel maps fields between the three staggered locations (cells,
vertices, edges).  Fields are arrays whose last axis runs over the mesh
entity; leading axes (e.g. layers) broadcast.  The kernels implement

    divergence      (div y)_i       = (1/A_i)  sum_e n_{e,i} l_e y_e
    gradient        (grad p)_e      = -(1/d_e) sum_i n_{e,i} p_i
    curl            (curl y)_v      = (1/A_v)  sum_e t_{e,v} d_e y_e
    perp_grad       (pgrad s)_e     = -(1/l_e) sum_v t_{e,v} s_v
    perp_flux       (k x y)_e       = (1/d_e)  sum_e' w_{e,e'} l_{e'} y_{e'}
    cell_to_vertex  <p>_v           = (1/A_v)  sum_i R_{i,v} A_i p_i
    vertex_to_edge  <s>_e           = (1/2)    sum_v s_v
    cell_to_edge    <p>_e           = (1/2)    sum_i p_i
    edge_to_cell    <y>_i           = (1/A_i)  sum_e (A_e/2) y_e

With t_{e,v} = +1 at the vertex on the k-cross-normal side, the curl is
the counterclockwise circulation; perp_grad then carries a minus sign so
that it reconstructs (k x grad s) . n and pairs with the curl as
<pgrad s, y>_E = -<s, curl y>_V, mirroring the continuous identity.
perp_flux uses the source-edge primal length l_{e'} so that it is
exactly skew in the edge inner product (the target-length variant is
only skew on uniform grids).

The gradient is the negative adjoint of the divergence under the
(cell, edge) area inner products by construction, and edge_to_cell is
the transpose of cell_to_edge.
"""

from __future__ import annotations

import numpy as np

from mlswe.mesh.core import Mesh


def divergence(mesh: Mesh, y: np.ndarray) -> np.ndarray:
    return np.sum(y[..., mesh.eoc_idx] * mesh.div_w, axis=-1)


def gradient(mesh: Mesh, p: np.ndarray) -> np.ndarray:
    acc = mesh.n_eic[:, 0] * p[..., mesh.ie0] + mesh.n_eic[:, 1] * p[..., mesh.ie1]
    return -acc / mesh.dual_edge_length


def curl(mesh: Mesh, y: np.ndarray) -> np.ndarray:
    return np.sum(y[..., mesh.eov_idx] * mesh.curl_w, axis=-1)


def perp_grad(mesh: Mesh, s: np.ndarray) -> np.ndarray:
    acc = mesh.t_ev[:, 0] * s[..., mesh.ve0] + mesh.t_ev[:, 1] * s[..., mesh.ve1]
    return -acc / mesh.primal_edge_length


def perp_flux(mesh: Mesh, y: np.ndarray) -> np.ndarray:
    return np.sum(y[..., mesh.eoe_idx] * mesh.perp_w, axis=-1)


def cell_to_vertex(mesh: Mesh, p: np.ndarray) -> np.ndarray:
    return np.sum(p[..., mesh.cov_idx] * mesh.c2v_w, axis=-1)


def vertex_to_edge(mesh: Mesh, s: np.ndarray) -> np.ndarray:
    return 0.5 * (s[..., mesh.ve0] + s[..., mesh.ve1])


def cell_to_edge(mesh: Mesh, p: np.ndarray) -> np.ndarray:
    return 0.5 * (p[..., mesh.ie0] + p[..., mesh.ie1])


def edge_to_cell(mesh: Mesh, y: np.ndarray) -> np.ndarray:
    return np.sum(y[..., mesh.eoc_idx] * mesh.e2i_w, axis=-1)


def vector_laplacian(mesh: Mesh, y: np.ndarray) -> np.ndarray:
    """Anisotropic vector Laplacian grad(div y) - sqrt(3) pgrad(curl y).

    Used inside the energetically consistent biharmonic closure.
    """
    return gradient(mesh, divergence(mesh, y)) \
        - np.sqrt(3.0) * perp_grad(mesh, curl(mesh, y))


def cell_inner(mesh: Mesh, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b * mesh.area_cell))


def vertex_inner(mesh: Mesh, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b * mesh.area_dual))


def edge_inner(mesh: Mesh, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b * mesh.area_edge))
