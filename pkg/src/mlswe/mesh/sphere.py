"""Spherical centroidal-Voronoi-ish C-grid from icosahedral seeds.

Generators (cell centers) come from subdividing the icosahedron and are
optionally relaxed by Lloyd iterations (generator -> area centroid of
its Voronoi cell).  The Delaunay triangulation is the convex hull of the
generators; dual vertices are spherical circumcenters.  Positions are
stored as unit vectors; lengths and areas are geodesic, scaled by the
radius.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from mlswe.mesh.core import SPHERE, Mesh, MeshValidationError
from mlswe.mesh.weights import build_edge_structure

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def icosahedron_points() -> np.ndarray:
    p = GOLDEN
    pts = np.array([
        (-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
        (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
        (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1),
    ], dtype=float)
    return pts / np.linalg.norm(pts, axis=1)[:, None]


def subdivide_icosahedron(level: int) -> np.ndarray:
    """Unit-sphere generator points; 10*4**level + 2 of them."""
    points = list(icosahedron_points())
    hull = ConvexHull(np.asarray(points))
    faces = [tuple(s) for s in hull.simplices]
    for _ in range(level):
        midpoint = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                v = points[a] + points[b]
                points.append(v / np.linalg.norm(v))
                midpoint[key] = len(points) - 1
            return midpoint[key]

        new_faces = []
        for (a, b, c) in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.asarray(points)


def _oriented_simplices(points: np.ndarray) -> np.ndarray:
    """Delaunay triangles (as generator triples), ccw seen from outside."""
    hull = ConvexHull(points)
    tri = hull.simplices.copy()
    a, b, c = points[tri[:, 0]], points[tri[:, 1]], points[tri[:, 2]]
    flip = np.einsum("ij,ij->i", a, np.cross(b, c)) < 0
    tri[flip, 1], tri[flip, 2] = tri[flip, 2], tri[flip, 1].copy()
    return tri


def _circumcenters(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    a, b, c = points[tri[:, 0]], points[tri[:, 1]], points[tri[:, 2]]
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1)[:, None]
    centroid = a + b + c
    n[np.einsum("ij,ij->i", n, centroid) < 0] *= -1
    return n


def _arc(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Geodesic angle between unit vectors (rows)."""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.einsum("...i,...i->...", a, b)
    return np.arctan2(cross, dot)


def spherical_triangle_area(a, b, c) -> np.ndarray:
    """Unit-sphere triangle area by l'Huilier's formula (no pi-sized
    cancellation for small triangles)."""
    al = _arc(b, c)
    be = _arc(a, c)
    ga = _arc(a, b)
    s = 0.5 * (al + be + ga)
    t = np.tan(0.5 * s) * np.tan(0.5 * (s - al)) \
        * np.tan(0.5 * (s - be)) * np.tan(0.5 * (s - ga))
    return 4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))


def _polygon_centroid_integral(corners: np.ndarray) -> np.ndarray:
    """Integral of the position over a ccw geodesic polygon: sum over the
    boundary arcs of (arc angle / 2) times the arc's great-circle normal.
    """
    nxt = np.roll(corners, -1, axis=0)
    normal = np.cross(corners, nxt)
    norms = np.linalg.norm(normal, axis=1)
    theta = np.arctan2(norms, np.einsum("ij,ij->i", corners, nxt))
    return 0.5 * np.sum(normal / norms[:, None] * theta[:, None], axis=0)


def lloyd_relax(points: np.ndarray, iters: int) -> np.ndarray:
    """Move each generator to the centroid of its Voronoi cell."""
    pts = points.copy()
    n = len(pts)
    for _ in range(iters):
        tri = _oriented_simplices(pts)
        cc = _circumcenters(pts, tri)
        tris_of = [[] for _ in range(n)]
        for t, (i, j, k) in enumerate(tri):
            tris_of[i].append(t)
            tris_of[j].append(t)
            tris_of[k].append(t)
        new = np.empty_like(pts)
        for i in range(n):
            corners = cc[tris_of[i]]
            order = _ccw_order_about(pts[i], corners)
            integral = _polygon_centroid_integral(corners[order])
            nrm = np.linalg.norm(integral)
            new[i] = integral / nrm if nrm > 0 else pts[i]
        pts = new
    return pts


def _tangent_frame(center: np.ndarray):
    ref = np.array([0.0, 0.0, 1.0])
    if abs(center @ ref) > 0.9:
        ref = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(center, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(center, e1)
    return e1, e2


def _ccw_order_about(center: np.ndarray, pts: np.ndarray) -> np.ndarray:
    e1, e2 = _tangent_frame(center)
    ang = np.arctan2(pts @ e2, pts @ e1)
    return np.argsort(ang)


def build_spherical_mesh(subdivision_level: int, lloyd_iters: int,
                         radius: float) -> Mesh:
    """Boundaryless spherical C-grid.

    ``subdivision_level`` 0 gives the icosahedral Voronoi mesh (12 cells,
    30 edges, 20 vertices); each level quadruples the triangle count.
    ``lloyd_iters`` centroidal relaxation sweeps even out cell areas.
    """
    if subdivision_level < 0:
        raise ValueError("subdivision_level must be >= 0")
    if radius <= 0:
        raise ValueError("radius must be positive")
    gen = subdivide_icosahedron(subdivision_level)
    if lloyd_iters > 0:
        gen = lloyd_relax(gen, lloyd_iters)

    tri = _oriented_simplices(gen)
    vertex_pos = _circumcenters(gen, tri)
    nc, nv = len(gen), len(tri)

    edge_of_pair = {}
    cells_on_edge = []
    for (i, j, k) in tri:
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(a, b), max(a, b))
            if key not in edge_of_pair:
                edge_of_pair[key] = len(cells_on_edge)
                cells_on_edge.append(key)
    cells_on_edge = np.asarray(cells_on_edge, dtype=np.int32)
    ne = len(cells_on_edge)

    vertices_on_edge = np.full((ne, 2), -1, dtype=np.int32)
    edges_on_vertex = np.empty((nv, 3), dtype=np.int32)
    for t, (i, j, k) in enumerate(tri):
        for s, (a, b) in enumerate(((i, j), (j, k), (k, i))):
            e = edge_of_pair[(min(a, b), max(a, b))]
            edges_on_vertex[t, s] = e
            if vertices_on_edge[e, 0] < 0:
                vertices_on_edge[e, 0] = t
            elif vertices_on_edge[e, 1] < 0:
                vertices_on_edge[e, 1] = t
            else:
                raise MeshValidationError("edge shared by more than two triangles")
    if (vertices_on_edge < 0).any():
        raise MeshValidationError("edge with fewer than two triangles")
    cells_on_vertex = tri.astype(np.int32)

    eoc_lists = [[] for _ in range(nc)]
    for e, (i, j) in enumerate(cells_on_edge):
        eoc_lists[i].append(e)
        eoc_lists[j].append(e)
    max_eoc = max(len(s) for s in eoc_lists)
    edges_on_cell = np.full((nc, max_eoc), -1, dtype=np.int32)

    c0 = gen[cells_on_edge[:, 0]]
    c1 = gen[cells_on_edge[:, 1]]
    edge_pos = c0 + c1
    edge_pos /= np.linalg.norm(edge_pos, axis=1)[:, None]

    for i in range(nc):
        ids = np.asarray(eoc_lists[i])
        order = _ccw_order_about(gen[i], edge_pos[ids])
        edges_on_cell[i, :len(ids)] = ids[order]

    for v in range(nv):
        order = _ccw_order_about(vertex_pos[v], gen[cells_on_vertex[v]])
        cells_on_vertex[v] = cells_on_vertex[v][order]
        order = _ccw_order_about(vertex_pos[v], edge_pos[edges_on_vertex[v]])
        edges_on_vertex[v] = edges_on_vertex[v][order]

    dual_edge_length = radius * _arc(c0, c1)
    v0 = vertex_pos[vertices_on_edge[:, 0]]
    v1 = vertex_pos[vertices_on_edge[:, 1]]
    primal_edge_length = radius * _arc(v0, v1)
    area_edge = primal_edge_length * dual_edge_length

    n_eic = np.empty((ne, 2), dtype=np.int32)
    n_eic[:, 0] = 1
    n_eic[:, 1] = -1

    nhat = c1 - c0
    nhat -= np.einsum("ij,ij->i", nhat, edge_pos)[:, None] * edge_pos
    nhat /= np.linalg.norm(nhat, axis=1)[:, None]
    that = np.cross(edge_pos, nhat)
    t_ev = np.empty((ne, 2), dtype=np.int32)
    for j in (0, 1):
        dv = vertex_pos[vertices_on_edge[:, j]] - edge_pos
        t_ev[:, j] = np.where(np.einsum("ij,ij->i", dv, that) > 0, 1, -1)

    # kite areas: two geodesic triangles per (cell, vertex) pair
    kite = np.zeros((nv, 3))
    area_cell = np.zeros(nc)
    eov_sets = [set(edges_on_vertex[v]) for v in range(nv)]
    for v in range(nv):
        xv = vertex_pos[v]
        for s, i in enumerate(cells_on_vertex[v]):
            shared = [e for e in edges_on_cell[i] if e in eov_sets[v]]
            if len(shared) != 2:
                raise MeshValidationError(
                    f"cell {i} and vertex {v} share {len(shared)} edges")
            m1, m2 = edge_pos[shared[0]], edge_pos[shared[1]]
            k = spherical_triangle_area(gen[i], m1, xv) \
                + spherical_triangle_area(gen[i], xv, m2)
            kite[v, s] = k * radius ** 2
            area_cell[i] += kite[v, s]
    area_dual = kite.sum(axis=1)
    kite_frac = kite / area_cell[cells_on_vertex]

    cell_is_dry = np.zeros(nc, dtype=bool)
    edge_is_boundary = np.zeros(ne, dtype=bool)
    edges_on_edge, edge_weights = build_edge_structure(
        edges_on_cell, cells_on_edge, vertices_on_edge, cells_on_vertex,
        kite_frac, n_eic, cell_is_dry, edge_is_boundary)

    mesh = Mesh(
        geometry=SPHERE, domain_size=np.array([radius]),
        cell_center=gen, vertex_pos=vertex_pos, edge_pos=edge_pos,
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
    _report_bad_circumcenters(mesh)
    return mesh


def _report_bad_circumcenters(mesh: Mesh) -> None:
    gen = mesh.cell_center
    bad = []
    for v in range(mesh.n_vertices):
        p = gen[mesh.cells_on_vertex[v]]
        x = mesh.vertex_pos[v]
        for j in range(3):
            a, b = p[j], p[(j + 1) % 3]
            if np.dot(np.cross(a, b), x) * np.dot(np.cross(a, b), p[(j + 2) % 3]) < 0:
                bad.append(v)
                break
    if bad:
        raise MeshValidationError(
            f"circumcenter outside dual triangle for {len(bad)} triangles "
            f"(first few: {bad[:8]})")
