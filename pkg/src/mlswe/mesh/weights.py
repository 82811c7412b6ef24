"""Tangential-flux reconstruction weights.

The weights w_{e,e'} couple each edge to the other edges of its two
cells and are the unique antisymmetric solution of the orientation/kite
relation -T W = R N (rows indexed by vertex and source edge).  They are
accumulated cell by cell: walking counterclockwise from the source edge
e' to the target edge e inside cell i and summing the kite fractions of
the vertices passed,

    w_{e,e'} += n_{e',i} * n_{e,i} * (sum of passed R_{i,v} - 1/2).
"""

from __future__ import annotations

import numpy as np


def _cell_walk_tables(edges_on_cell, cells_on_edge, vertices_on_edge,
                      cells_on_vertex, kite_frac):
    """Per-cell ccw edge cycles with the kite fraction of the vertex
    between each pair of consecutive edges."""
    nc = edges_on_cell.shape[0]
    voe = vertices_on_edge
    cycles = []
    for i in range(nc):
        edges = edges_on_cell[i][edges_on_cell[i] >= 0]
        m = len(edges)
        rbetween = np.empty(m)
        for j in range(m):
            prev = edges[j - 1]
            cur = edges[j]
            shared = set(voe[prev]) & set(voe[cur])
            shared.discard(-1)
            assert len(shared) == 1, "consecutive cell edges must share a vertex"
            v = shared.pop()
            slot = list(cells_on_vertex[v]).index(i)
            rbetween[j] = kite_frac[v, slot]
        cycles.append((edges, rbetween))
    return cycles


def build_edge_structure(edges_on_cell, cells_on_edge, vertices_on_edge,
                         cells_on_vertex, kite_frac, n_eic, cell_is_dry,
                         edge_is_boundary):
    """Build edges_on_edge and the aligned weight array w_{e,e'}.

    Row e of edges_on_edge lists the other edges of the first cell of e
    (counterclockwise, starting after e) followed by those of the second
    cell.  Weight contributions from dry cells are skipped and entries
    referencing boundary edges are zeroed.
    """
    ne = cells_on_edge.shape[0]
    n_sign = {}
    for e in range(ne):
        for j in (0, 1):
            if cells_on_edge[e, j] >= 0:
                n_sign[(e, cells_on_edge[e, j])] = n_eic[e, j]

    cycles = _cell_walk_tables(edges_on_cell, cells_on_edge, vertices_on_edge,
                               cells_on_vertex, kite_frac)

    slots_per_edge = [[] for _ in range(ne)]
    slot_of = {}
    for e in range(ne):
        for i in cells_on_edge[e]:
            if i < 0:
                continue
            edges = cycles[i][0]
            pos = int(np.nonzero(edges == e)[0][0])
            m = len(edges)
            for k in range(1, m):
                f = edges[(pos + k) % m]
                slot_of[(e, i, f)] = len(slots_per_edge[e])
                slots_per_edge[e].append(f)

    max_eoe = max(len(s) for s in slots_per_edge)
    edges_on_edge = np.full((ne, max_eoe), -1, dtype=np.int32)
    for e, s in enumerate(slots_per_edge):
        edges_on_edge[e, :len(s)] = s

    weights = np.zeros((ne, max_eoe))
    nc = edges_on_cell.shape[0]
    for i in range(nc):
        if cell_is_dry[i]:
            continue
        edges, rbetween = cycles[i]
        m = len(edges)
        for a in range(m):
            ea = edges[a]
            na = n_sign[(ea, i)]
            s = 0.0
            for k in range(1, m):
                b = (a + k) % m
                eb = edges[b]
                s += rbetween[b]
                weights[eb, slot_of[(eb, i, ea)]] += na * n_sign[(eb, i)] * (s - 0.5)

    weights[edge_is_boundary] = 0.0
    ref_boundary = edge_is_boundary[np.where(edges_on_edge >= 0, edges_on_edge, 0)]
    weights[ref_boundary & (edges_on_edge >= 0)] = 0.0
    return edges_on_edge, weights


def compute_edge_weights(mesh) -> np.ndarray:
    """Recompute w_{e,e'} for a built mesh, aligned with mesh.edges_on_edge."""
    eoe, w = build_edge_structure(
        mesh.edges_on_cell, mesh.cells_on_edge, mesh.vertices_on_edge,
        mesh.cells_on_vertex, mesh.kite_frac, mesh.n_eic, mesh.cell_is_dry,
        mesh.edge_is_boundary)
    if eoe.shape != mesh.edges_on_edge.shape or (eoe != mesh.edges_on_edge).any():
        raise ValueError("edges_on_edge layout does not match the canonical "
                         "construction; cannot align recomputed weights")
    return w
