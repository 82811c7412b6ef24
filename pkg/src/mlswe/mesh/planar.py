"""Doubly periodic regular hexagonal C-grid on the plane."""

from __future__ import annotations

import numpy as np

from mlswe.mesh.core import PLANAR, Mesh
from mlswe.mesh.weights import build_edge_structure

ROOT3 = np.sqrt(3.0)


def build_planar_hex_mesh(nx: int, ny: int, dc: float) -> Mesh:
    """Build a doubly periodic mesh of regular hexagons.

    ``nx`` columns by ``ny`` rows of hexagonal cells with center-to-center
    distance ``dc`` (meters).  ``ny`` must be even so the staggered rows
    tile the periodic box.  The dual grid is the regular triangular
    lattice; all cells are interior.

    Counts: ``nx*ny`` cells, ``3*nx*ny`` edges, ``2*nx*ny`` vertices.
    """
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must both be >= 2")
    if ny % 2 != 0:
        raise ValueError("ny must be even for a periodic staggered tiling")
    if dc <= 0:
        raise ValueError("cell spacing dc must be positive")
    nc = nx * ny
    if 3 * nc > np.iinfo(np.int32).max:
        raise ValueError("mesh dimensions overflow 32-bit indices")

    dy = 0.5 * ROOT3 * dc
    box = np.array([nx * dc, ny * dy])

    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    cx = (ii + 0.5 * (jj % 2)) * dc
    cy = jj * dy
    cell_center = np.stack([cx.ravel(), cy.ravel()], axis=1)

    def cid(i, j):
        return (j % ny) * nx + (i % nx)

    def neighbor(i, j, d):
        p = j % 2
        if d == "E":
            return cid(i + 1, j)
        if d == "W":
            return cid(i - 1, j)
        if d == "NE":
            return cid(i + p, j + 1)
        if d == "NW":
            return cid(i + p - 1, j + 1)
        if d == "SE":
            return cid(i + p, j - 1)
        if d == "SW":
            return cid(i + p - 1, j - 1)
        raise KeyError(d)

    # three edges owned by each cell: E, NE, NW
    def eid(c, d):
        i, j = c % nx, c // nx
        if d == "E":
            return 3 * c
        if d == "NE":
            return 3 * c + 1
        if d == "NW":
            return 3 * c + 2
        if d == "W":
            return 3 * neighbor(i, j, "W")
        if d == "SW":
            return 3 * neighbor(i, j, "SW") + 1
        if d == "SE":
            return 3 * neighbor(i, j, "SE") + 2
        raise KeyError(d)

    ne = 3 * nc
    cells_on_edge = np.empty((ne, 2), dtype=np.int32)
    for c in range(nc):
        i, j = c % nx, c // nx
        for k, d in enumerate(("E", "NE", "NW")):
            cells_on_edge[3 * c + k] = (c, neighbor(i, j, d))

    # two dual triangles owned by each cell:
    #   2c   : {c, E(c), NE(c)}  with edges E(c), NE(c), NW(E(c))
    #   2c+1 : {c, NE(c), NW(c)} with edges NE(c), NW(c), E(NW(c))
    nv = 2 * nc
    cells_on_vertex = np.empty((nv, 3), dtype=np.int32)
    edges_on_vertex = np.empty((nv, 3), dtype=np.int32)
    for c in range(nc):
        i, j = c % nx, c // nx
        e_c = neighbor(i, j, "E")
        ne_c = neighbor(i, j, "NE")
        nw_c = neighbor(i, j, "NW")
        cells_on_vertex[2 * c] = (c, e_c, ne_c)
        edges_on_vertex[2 * c] = (eid(c, "E"), eid(c, "NE"), eid(e_c, "NW"))
        cells_on_vertex[2 * c + 1] = (c, ne_c, nw_c)
        edges_on_vertex[2 * c + 1] = (eid(c, "NE"), eid(c, "NW"), eid(nw_c, "E"))

    vertices_on_edge = np.full((ne, 2), -1, dtype=np.int32)
    for v in range(nv):
        for e in edges_on_vertex[v]:
            if vertices_on_edge[e, 0] < 0:
                vertices_on_edge[e, 0] = v
            else:
                assert vertices_on_edge[e, 1] < 0
                vertices_on_edge[e, 1] = v

    edges_on_cell = np.empty((nc, 6), dtype=np.int32)
    for c in range(nc):
        edges_on_cell[c] = [eid(c, d) for d in ("E", "NE", "NW", "W", "SW", "SE")]

    mesh = _finish_mesh(PLANAR, box, cell_center, cells_on_edge,
                        vertices_on_edge, edges_on_cell, cells_on_vertex,
                        edges_on_vertex)
    return mesh


def _wrap(pos, box):
    return np.mod(pos, box)


def _minimg(d, box):
    return d - box * np.round(d / box)


def _finish_mesh(geometry, box, cell_center, cells_on_edge, vertices_on_edge,
                 edges_on_cell, cells_on_vertex, edges_on_vertex,
                 cell_is_dry=None) -> Mesh:
    """Derive positions, measures, orientations and weights for a planar
    mesh whose connectivity is already assembled."""
    nc = cell_center.shape[0]
    ne = cells_on_edge.shape[0]
    nv = cells_on_vertex.shape[0]

    # vertex = circumcenter of its (equilateral) dual triangle
    base = cell_center[cells_on_vertex[:, 0]]
    rel = np.zeros((nv, 2))
    for j in (1, 2):
        rel += _minimg(cell_center[cells_on_vertex[:, j]] - base, box)
    vertex_pos = _wrap(base + rel / 3.0, box)

    c0 = cell_center[cells_on_edge[:, 0]]
    c1 = cell_center[cells_on_edge[:, 1]]
    edge_pos = _wrap(c0 + 0.5 * _minimg(c1 - c0, box), box)
    dual_edge_length = np.linalg.norm(_minimg(c1 - c0, box), axis=1)

    v0 = vertex_pos[vertices_on_edge[:, 0]]
    v1 = vertex_pos[vertices_on_edge[:, 1]]
    primal_edge_length = np.linalg.norm(_minimg(v1 - v0, box), axis=1)

    n_eic = np.empty((ne, 2), dtype=np.int32)
    n_eic[:, 0] = 1
    n_eic[:, 1] = -1

    nhat = _minimg(c1 - c0, box) / dual_edge_length[:, None]
    that = np.stack([-nhat[:, 1], nhat[:, 0]], axis=1)
    t_ev = np.empty((ne, 2), dtype=np.int32)
    for j in (0, 1):
        dv = _minimg(vertex_pos[vertices_on_edge[:, j]] - edge_pos, box)
        t_ev[:, j] = np.where(np.sum(dv * that, axis=1) > 0, 1, -1)

    # kite areas: quad (cell center, edge point, vertex, edge point)
    kite = np.zeros((nv, 3))
    area_cell = np.zeros(nc)
    eov_set = [set(edges_on_vertex[v]) for v in range(nv)]
    for v in range(nv):
        xv = vertex_pos[v]
        for s, i in enumerate(cells_on_vertex[v]):
            shared = [e for e in edges_on_cell[i] if e in eov_set[v]]
            assert len(shared) == 2
            pts = [cell_center[i], edge_pos[shared[0]], xv, edge_pos[shared[1]]]
            rel = [_minimg(p - xv, box) for p in pts]
            a = 0.0
            for k in range(4):
                p, q = rel[k], rel[(k + 1) % 4]
                a += p[0] * q[1] - p[1] * q[0]
            kite[v, s] = 0.5 * abs(a)
            area_cell[i] += kite[v, s]
    area_dual = kite.sum(axis=1)
    kite_frac = kite / area_cell[cells_on_vertex]
    area_edge = primal_edge_length * dual_edge_length

    # order edges_on_cell / vertex neighborhoods counterclockwise
    edges_on_cell = _ccw_sort(edges_on_cell, edge_pos, cell_center, box)
    order = _ccw_order(cells_on_vertex, cell_center, vertex_pos, box)
    cells_on_vertex = np.take_along_axis(cells_on_vertex, order, axis=1)
    kite_frac = np.take_along_axis(kite_frac, order, axis=1)
    edges_on_vertex = _ccw_sort(edges_on_vertex, edge_pos, vertex_pos, box)

    edge_is_boundary = np.zeros(ne, dtype=bool)
    if cell_is_dry is None:
        cell_is_dry = np.zeros(nc, dtype=bool)

    edges_on_edge, edge_weights = build_edge_structure(
        edges_on_cell, cells_on_edge, vertices_on_edge, cells_on_vertex,
        kite_frac, n_eic, cell_is_dry, edge_is_boundary)

    return Mesh(
        geometry=geometry, domain_size=box,
        cell_center=cell_center, vertex_pos=vertex_pos, edge_pos=edge_pos,
        edges_on_cell=edges_on_cell, cells_on_edge=cells_on_edge,
        vertices_on_edge=vertices_on_edge, edges_on_vertex=edges_on_vertex,
        cells_on_vertex=cells_on_vertex, edges_on_edge=edges_on_edge,
        n_eic=n_eic, t_ev=t_ev,
        area_cell=area_cell, area_dual=area_dual, area_edge=area_edge,
        primal_edge_length=primal_edge_length,
        dual_edge_length=dual_edge_length,
        kite_frac=kite_frac, edge_weights=edge_weights,
        edge_is_boundary=edge_is_boundary, cell_is_dry=cell_is_dry,
    )


def _ccw_sort(neigh, pos, centers, box):
    out = neigh.copy()
    for r in range(neigh.shape[0]):
        ids = neigh[r][neigh[r] >= 0]
        d = _minimg(pos[ids] - centers[r], box)
        ang = np.arctan2(d[:, 1], d[:, 0])
        out[r, :len(ids)] = ids[np.argsort(ang)]
        out[r, len(ids):] = -1
    return out


def _ccw_order(neigh, pos, centers, box):
    order = np.empty(neigh.shape, dtype=np.int64)
    for r in range(neigh.shape[0]):
        ids = neigh[r]
        d = _minimg(pos[ids] - centers[r], box)
        ang = np.arctan2(d[:, 1], d[:, 0])
        order[r] = np.argsort(ang)
    return order
