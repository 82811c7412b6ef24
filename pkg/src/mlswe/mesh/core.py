"""C-grid mesh container and validation.

The mesh is a Voronoi primal grid (cells) with a Delaunay dual grid
(vertices = dual triangle circumcenters).  Scalars live at cell centers,
normal velocities at edge midpoints, vorticity-like quantities at
vertices.  All connectivity is 0-based with -1 marking absent entries.
"""

from __future__ import annotations

import dataclasses

import numpy as np

PLANAR = "planar-periodic"
SPHERE = "sphere"


class MeshValidationError(Exception):
    """A mesh failed one of its structural or geometric invariants."""


@dataclasses.dataclass
class Mesh:
    """Immutable TRiSK-compatible C-grid.

    Positions are 2-D coordinates in meters for planar meshes and 3-D
    unit-sphere coordinates for spherical meshes (scaled by
    ``domain_size[0]`` = radius).  ``domain_size`` is ``(Lx, Ly)`` for
    doubly periodic planar meshes.

    Connectivity arrays use -1 for absent slots.  ``edges_on_cell`` is
    ordered counterclockwise around each cell; ``cells_on_vertex`` /
    ``edges_on_vertex`` are ordered counterclockwise around each vertex.

    Sign conventions: ``n_eic[e, j]`` is +1 when the stored edge normal
    points out of ``cells_on_edge[e, j]``.  ``t_ev[e, j]`` is +1 when the
    edge normal circulates counterclockwise around ``vertices_on_edge[e, j]``
    (equivalently: that vertex sits on the k-cross-normal side of the edge).
    """

    geometry: str
    domain_size: np.ndarray

    cell_center: np.ndarray
    vertex_pos: np.ndarray
    edge_pos: np.ndarray

    edges_on_cell: np.ndarray     # (nc, maxEoC)
    cells_on_edge: np.ndarray     # (ne, 2)
    vertices_on_edge: np.ndarray  # (ne, 2)
    edges_on_vertex: np.ndarray   # (nv, 3)
    cells_on_vertex: np.ndarray   # (nv, 3)
    edges_on_edge: np.ndarray     # (ne, maxEoE)

    n_eic: np.ndarray             # (ne, 2) in {-1, +1}
    t_ev: np.ndarray              # (ne, 2) in {-1, +1}

    area_cell: np.ndarray         # A_i  (nc,)
    area_dual: np.ndarray         # A_v  (nv,)
    area_edge: np.ndarray         # A_e = l_e * d_e  (ne,)
    primal_edge_length: np.ndarray  # l_e: distance between the edge's vertices
    dual_edge_length: np.ndarray    # d_e: distance between the edge's cells

    kite_frac: np.ndarray         # (nv, 3) aligned with cells_on_vertex
    edge_weights: np.ndarray      # (ne, maxEoE) aligned with edges_on_edge

    edge_is_boundary: np.ndarray  # (ne,) bool
    cell_is_dry: np.ndarray       # (nc,) bool

    @property
    def n_cells(self) -> int:
        return self.cell_center.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_pos.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertex_pos.shape[0]

    @property
    def is_spherical(self) -> bool:
        return self.geometry == SPHERE

    def __post_init__(self):
        self._build_kernels()

    # ------------------------------------------------------------------
    # geometry helpers

    def displacement(self, pos_a: np.ndarray, pos_b: np.ndarray) -> np.ndarray:
        """Displacement b - a; minimum-image on the periodic plane."""
        d = pos_b - pos_a
        if self.geometry == PLANAR:
            box = self.domain_size
            d -= box * np.round(d / box)
        return d

    def edge_normal(self) -> np.ndarray:
        """Unit normal per edge, pointing from cells_on_edge[:,0] to [:,1].

        For spherical meshes the normal is tangent to the sphere at the
        edge point.
        """
        c0 = self.cell_center[self.cells_on_edge[:, 0]]
        c1 = self.cell_center[self.cells_on_edge[:, 1]]
        d = self.displacement(c0, c1)
        if self.is_spherical:
            r = self.edge_pos
            d = d - (np.sum(d * r, axis=1)[:, None]) * r
        return d / np.linalg.norm(d, axis=1)[:, None]

    def edge_tangent(self) -> np.ndarray:
        """Unit tangent k x n per edge."""
        n = self.edge_normal()
        if self.is_spherical:
            return np.cross(self.edge_pos, n)
        return np.stack([-n[:, 1], n[:, 0]], axis=1)

    # ------------------------------------------------------------------
    # precomputed gather tables for the matrix-free operator kernels

    def _build_kernels(self):
        nc = self.n_cells
        ne = self.n_edges
        nv = self.n_vertices

        eoc = self.edges_on_cell
        self.eoc_valid = eoc >= 0
        self.eoc_idx = np.where(self.eoc_valid, eoc, 0)

        # n_{e,i} arranged per cell slot
        sign = np.zeros(eoc.shape)
        coe = self.cells_on_edge
        cells = np.repeat(np.arange(nc), eoc.shape[1]).reshape(eoc.shape)
        for j in (0, 1):
            hit = self.eoc_valid & (coe[self.eoc_idx, j] == cells)
            sign[hit] = self.n_eic[self.eoc_idx, j][hit]
        self.edge_sign_on_cell = sign

        le = self.primal_edge_length
        de = self.dual_edge_length
        self.div_w = sign * le[self.eoc_idx] / self.area_cell[:, None]
        self.e2i_w = np.where(
            self.eoc_valid, 0.5 * self.area_edge[self.eoc_idx], 0.0
        ) / self.area_cell[:, None]

        # t_{e,v} arranged per vertex slot
        eov = self.edges_on_vertex
        self.eov_valid = eov >= 0
        self.eov_idx = np.where(self.eov_valid, eov, 0)
        voe = self.vertices_on_edge
        tv = np.zeros(eov.shape)
        verts = np.repeat(np.arange(nv), eov.shape[1]).reshape(eov.shape)
        for j in (0, 1):
            hit = self.eov_valid & (voe[self.eov_idx, j] == verts)
            tv[hit] = self.t_ev[self.eov_idx, j][hit]
        self.t_on_vertex = tv
        self.curl_w = tv * de[self.eov_idx] / self.area_dual[:, None]

        cov = self.cells_on_vertex
        self.cov_valid = cov >= 0
        self.cov_idx = np.where(self.cov_valid, cov, 0)
        self.c2v_w = np.where(self.cov_valid, self.kite_frac, 0.0) \
            * self.area_cell[self.cov_idx] / self.area_dual[:, None]

        eoe = self.edges_on_edge
        self.eoe_valid = eoe >= 0
        self.eoe_idx = np.where(self.eoe_valid, eoe, 0)
        self.perp_w = np.where(self.eoe_valid, self.edge_weights, 0.0) \
            * le[self.eoe_idx] / de[:, None]

        self.ie0 = self.cells_on_edge[:, 0]
        self.ie1 = self.cells_on_edge[:, 1]
        self.ve0 = self.vertices_on_edge[:, 0]
        self.ve1 = self.vertices_on_edge[:, 1]


def validate_mesh(mesh: Mesh, weight_tol: float = 1e-12) -> None:
    """Check the structural and geometric mesh invariants.

    Raises MeshValidationError on the first violated invariant.  The
    edge-weight relation is checked through a sparse assembly of the
    orientation, kite and weight matrices.
    """
    nc, ne, nv = mesh.n_cells, mesh.n_edges, mesh.n_vertices

    def err(msg):
        raise MeshValidationError(msg)

    for name, arr, hi in (
        ("cells_on_edge", mesh.cells_on_edge, nc),
        ("vertices_on_edge", mesh.vertices_on_edge, nv),
        ("edges_on_cell", mesh.edges_on_cell, ne),
        ("edges_on_vertex", mesh.edges_on_vertex, ne),
        ("cells_on_vertex", mesh.cells_on_vertex, nc),
        ("edges_on_edge", mesh.edges_on_edge, ne),
    ):
        if arr.max() >= hi:
            err(f"{name} contains index {arr.max()} >= {hi}")
        if (arr < -1).any():
            err(f"{name} contains index < -1")

    for name, arr in (("n_eic", mesh.n_eic), ("t_ev", mesh.t_ev)):
        if not np.isin(arr, (-1, 1)).all():
            err(f"{name} has entries outside {{-1,+1}}")

    interior = ~mesh.edge_is_boundary
    if (mesh.cells_on_edge[interior] < 0).any():
        err("interior edge with fewer than two cells")
    if (mesh.vertices_on_edge[interior] < 0).any():
        err("interior edge with fewer than two vertices")
    two_cells = (mesh.cells_on_edge >= 0).all(axis=1)
    if (mesh.n_eic[two_cells, 0] * mesh.n_eic[two_cells, 1] != -1).any():
        err("edge with n_{e,i0} != -n_{e,i1}")
    if (mesh.t_ev[two_cells, 0] * mesh.t_ev[two_cells, 1] != -1).any():
        err("edge with t_{e,v0} != -t_{e,v1}")

    # kite fractions partition each cell
    kite_sum = np.zeros(nc)
    np.add.at(kite_sum, mesh.cov_idx[mesh.cov_valid],
              mesh.kite_frac[mesh.cov_valid])
    if np.abs(kite_sum - 1.0).max() > 1e-12:
        err(f"kite fractions do not sum to 1 per cell "
            f"(max deviation {np.abs(kite_sum - 1.0).max():.3e})")

    # kite areas partition each dual triangle
    dual_from_kites = np.sum(
        np.where(mesh.cov_valid, mesh.kite_frac, 0.0)
        * mesh.area_cell[mesh.cov_idx], axis=1)
    rel = np.abs(dual_from_kites - mesh.area_dual) / mesh.area_dual
    if rel.max() > 1e-10:
        err(f"kite areas do not partition dual cells (max rel {rel.max():.3e})")

    total_cell = mesh.area_cell.sum()
    total_dual = mesh.area_dual.sum()
    if abs(total_cell - total_dual) > 1e-10 * total_cell:
        err("total primal and dual areas differ")
    # A_e = l_e d_e double-counts the domain exactly on planar meshes and
    # to O(h^2) on the sphere (geodesic lengths vs. kite quads).
    area_tol = 1e-12 if mesh.geometry == PLANAR else 1e-3
    half_edge = 0.5 * mesh.area_edge.sum()
    if abs(half_edge - total_cell) > area_tol * total_cell:
        err(f"edge areas do not double-count the domain "
            f"(rel dev {abs(half_edge - total_cell) / total_cell:.3e})")

    _check_circumcenters(mesh)

    resid = weight_relation_residual(mesh)
    if resid > weight_tol:
        err(f"edge weight relation violated (max residual {resid:.3e})")


def _check_circumcenters(mesh: Mesh) -> None:
    """Every vertex (circumcenter) must lie inside its dual triangle."""
    bad = []
    for v in range(mesh.n_vertices):
        cells = mesh.cells_on_vertex[v]
        if (cells < 0).any():
            continue
        p = mesh.cell_center[cells]
        x = mesh.vertex_pos[v]
        if mesh.is_spherical:
            # inside test via signs against the three great-circle edges
            inside = True
            for j in range(3):
                a, b = p[j], p[(j + 1) % 3]
                if np.dot(np.cross(a, b), x) < 0:
                    inside = False
            if not inside:
                bad.append(v)
        else:
            a = mesh.displacement(x, p[0])
            b = mesh.displacement(x, p[1])
            c = mesh.displacement(x, p[2])
            s0 = a[0] * b[1] - a[1] * b[0]
            s1 = b[0] * c[1] - b[1] * c[0]
            s2 = c[0] * a[1] - c[1] * a[0]
            if not (s0 * s1 > 0 and s1 * s2 > 0):
                bad.append(v)
    if bad:
        raise MeshValidationError(
            f"{len(bad)} circumcenters outside their dual triangle "
            f"(first few: {bad[:8]})")


def weight_relation_residual(mesh: Mesh) -> float:
    """Max-norm residual of the defining weight relation -T W = R N.

    T holds t_{e,v}, W the edge weights, R the kite fractions R_{i,v},
    N the signs n_{e,i}; rows of T and R are indexed by vertex, columns
    of W and N by edge.
    """
    from scipy import sparse

    nv, ne, nc = mesh.n_vertices, mesh.n_edges, mesh.n_cells

    voe = mesh.vertices_on_edge
    ok = voe >= 0
    rows = voe[ok]
    cols = np.repeat(np.arange(ne), 2).reshape(ne, 2)[ok]
    T = sparse.coo_matrix((mesh.t_ev[ok], (rows, cols)), shape=(nv, ne)).tocsr()

    ok = mesh.cov_valid
    rows = np.repeat(np.arange(nv), 3).reshape(nv, 3)[ok]
    cols = mesh.cov_idx[ok]
    R = sparse.coo_matrix((mesh.kite_frac[ok], (rows, cols)), shape=(nv, nc)).tocsr()

    coe = mesh.cells_on_edge
    ok = coe >= 0
    rows = coe[ok]
    cols = np.repeat(np.arange(ne), 2).reshape(ne, 2)[ok]
    N = sparse.coo_matrix((mesh.n_eic[ok], (rows, cols)), shape=(nc, ne)).tocsr()

    ok = mesh.eoe_valid
    rows = np.repeat(np.arange(ne), ok.shape[1]).reshape(ok.shape)[ok]
    cols = mesh.eoe_idx[ok]
    W = sparse.coo_matrix((mesh.edge_weights[ok], (rows, cols)), shape=(ne, ne)).tocsr()

    resid = (T @ W + R @ N)
    return 0.0 if resid.nnz == 0 else np.abs(resid.data).max()
