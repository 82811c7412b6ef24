"""Mesh persistence.

Two interchangeable formats hold the same named arrays:

* binary: an ``.npz`` container (little-endian float64 / int32 arrays
  plus the geometry tag and format version);
* text: labeled blocks, one array per block::

      # mlswe mesh text v1
      geometry planar-periodic
      array domain_size float64 2
      40000 34641.01615137754
      array cells_on_edge int32 48 2
      0 1
      ...

Both round-trip losslessly (text uses 17 significant digits).  A file
without ``edge_weights`` is accepted; the weights are recomputed from
the connectivity.
"""

from __future__ import annotations

import io as _io
import zipfile

import numpy as np

from mlswe.mesh.core import Mesh, MeshValidationError
from mlswe.mesh import weights as _weights

FORMAT_VERSION = 1

_FLOAT_FIELDS = (
    "domain_size", "cell_center", "vertex_pos", "edge_pos",
    "area_cell", "area_dual", "area_edge",
    "primal_edge_length", "dual_edge_length",
    "kite_frac", "edge_weights",
)
_INT_FIELDS = (
    "edges_on_cell", "cells_on_edge", "vertices_on_edge",
    "edges_on_vertex", "cells_on_vertex", "edges_on_edge",
    "n_eic", "t_ev",
)
_BOOL_FIELDS = ("edge_is_boundary", "cell_is_dry")

_OPTIONAL = ("edge_weights",)


def save_mesh(mesh: Mesh, path: str) -> None:
    """Write a mesh; ``.txt`` suffix selects the text format."""
    if str(path).endswith(".txt"):
        _save_text(mesh, path)
    else:
        _save_npz(mesh, path)


def load_mesh(path: str) -> Mesh:
    """Read a mesh in either format, validate shapes and orientation
    signs, and recompute edge weights when the file omits them."""
    with open(path, "rb") as f:
        magic = f.read(2)
    fields = _load_npz(path) if magic == b"PK" else _load_text(path)
    return _mesh_from_fields(fields)


def _save_npz(mesh: Mesh, path: str) -> None:
    data = {"format_version": np.array(FORMAT_VERSION, dtype="<i4"),
            "geometry": np.array(mesh.geometry)}
    for name in _FLOAT_FIELDS:
        data[name] = getattr(mesh, name).astype("<f8")
    for name in _INT_FIELDS:
        data[name] = getattr(mesh, name).astype("<i4")
    for name in _BOOL_FIELDS:
        data[name] = getattr(mesh, name).astype("<i4")
    np.savez(path, **data)


def _load_npz(path: str) -> dict:
    fields = {}
    try:
        with np.load(path, allow_pickle=False) as data:
            for name in data.files:
                fields[name] = data[name]
    except (zipfile.BadZipFile, ValueError, OSError) as exc:
        raise MeshValidationError(f"malformed mesh file {path}: {exc}") from exc
    return fields


def _save_text(mesh: Mesh, path: str) -> None:
    buf = _io.StringIO()
    buf.write("# mlswe mesh text v1\n")
    buf.write(f"format_version {FORMAT_VERSION}\n")
    buf.write(f"geometry {mesh.geometry}\n")

    def block(name, arr, fmt):
        shape = " ".join(str(s) for s in arr.shape)
        buf.write(f"array {name} {arr.dtype.name} {shape}\n")
        flat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr[:, None]
        for row in flat:
            buf.write(" ".join(fmt % v for v in row) + "\n")

    for name in _FLOAT_FIELDS:
        block(name, getattr(mesh, name).astype(np.float64), "%.17g")
    for name in _INT_FIELDS:
        block(name, getattr(mesh, name).astype(np.int32), "%d")
    for name in _BOOL_FIELDS:
        block(name, getattr(mesh, name).astype(np.int32), "%d")
    with open(path, "w") as f:
        f.write(buf.getvalue())


def _load_text(path: str) -> dict:
    fields = {}
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "format_version":
            fields["format_version"] = np.array(int(parts[1]))
            i += 1
        elif parts[0] == "geometry":
            fields["geometry"] = np.array(parts[1])
            i += 1
        elif parts[0] == "array":
            name, dtype = parts[1], parts[2]
            shape = tuple(int(s) for s in parts[3:])
            nrows = shape[0] if shape else 1
            vals = []
            for row in lines[i + 1:i + 1 + nrows]:
                vals.extend(row.split())
            try:
                arr = np.array(vals, dtype=dtype).reshape(shape)
            except ValueError as exc:
                raise MeshValidationError(
                    f"malformed text block {name!r}: {exc}") from exc
            fields[name] = arr
            i += 1 + nrows
        else:
            raise MeshValidationError(f"unrecognized line in mesh file: {lines[i]!r}")
    return fields


def _mesh_from_fields(fields: dict) -> Mesh:
    if "geometry" not in fields:
        raise MeshValidationError("mesh file missing geometry tag")
    geometry = str(fields["geometry"])
    version = int(fields.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise MeshValidationError(f"unsupported mesh format version {version}")

    kwargs = {"geometry": geometry}
    for name in _FLOAT_FIELDS:
        if name in fields:
            kwargs[name] = fields[name].astype(np.float64)
        elif name not in _OPTIONAL:
            raise MeshValidationError(f"mesh file missing array {name!r}")
    for name in _INT_FIELDS:
        if name not in fields:
            raise MeshValidationError(f"mesh file missing array {name!r}")
        kwargs[name] = fields[name].astype(np.int32)
    for name in _BOOL_FIELDS:
        if name not in fields:
            raise MeshValidationError(f"mesh file missing array {name!r}")
        kwargs[name] = fields[name].astype(bool)

    nc = kwargs["cell_center"].shape[0]
    ne = kwargs["edge_pos"].shape[0]
    nv = kwargs["vertex_pos"].shape[0]
    checks = (
        ("cells_on_edge", (ne, 2), nc), ("vertices_on_edge", (ne, 2), nv),
        ("cells_on_vertex", (nv, 3), nc), ("edges_on_vertex", (nv, 3), ne),
    )
    for name, shape, hi in checks:
        arr = kwargs[name]
        if arr.shape != shape:
            raise MeshValidationError(
                f"{name} has shape {arr.shape}, expected {shape}")
        if arr.max() >= hi or arr.min() < -1:
            raise MeshValidationError(f"{name} contains out-of-range indices")
    if kwargs["edges_on_cell"].shape[0] != nc:
        raise MeshValidationError("edges_on_cell count mismatch")
    if kwargs["edges_on_cell"].max() >= ne:
        raise MeshValidationError("edges_on_cell contains out-of-range indices")
    for name in ("n_eic", "t_ev"):
        if not np.isin(kwargs[name], (-1, 1)).all():
            raise MeshValidationError(f"{name} has entries outside {{-1,+1}}")
    for name, n in (("area_cell", nc), ("area_dual", nv), ("area_edge", ne),
                    ("primal_edge_length", ne), ("dual_edge_length", ne)):
        if kwargs[name].shape != (n,):
            raise MeshValidationError(f"{name} count mismatch")

    missing_weights = "edge_weights" not in kwargs
    if missing_weights:
        kwargs["edge_weights"] = np.zeros_like(
            kwargs["edges_on_edge"], dtype=np.float64)
    mesh = Mesh(**kwargs)
    if missing_weights:
        w = _weights.compute_edge_weights(mesh)
        mesh = Mesh(**{**kwargs, "edge_weights": w})
    return mesh
