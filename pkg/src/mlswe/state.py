"""Prognostic state, model configuration and vertical layer matrices."""

from __future__ import annotations

import dataclasses

import numpy as np

from mlswe.mesh.core import Mesh


class ModelStateError(Exception):
    """NaN or otherwise corrupt prognostic data."""


class OutcroppingError(Exception):
    """A wet layer thickness fell below the configured floor."""


@dataclasses.dataclass
class LayeredState:
    """Layer thicknesses h (L, n_cells) and edge-normal velocities
    u (L, n_edges)."""

    h: np.ndarray
    u: np.ndarray

    @property
    def n_layers(self) -> int:
        return self.h.shape[0]

    def copy(self) -> "LayeredState":
        return LayeredState(self.h.copy(), self.u.copy())

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.h.ravel(), self.u.ravel()])

    @staticmethod
    def from_flat(vec: np.ndarray, n_layers: int, n_cells: int,
                  n_edges: int) -> "LayeredState":
        nh = n_layers * n_cells
        return LayeredState(
            vec[:nh].reshape(n_layers, n_cells),
            vec[nh:].reshape(n_layers, n_edges),
        )

    def axpy(self, a: float, other: "LayeredState") -> "LayeredState":
        return LayeredState(self.h + a * other.h, self.u + a * other.u)


@dataclasses.dataclass
class LayerMatrices:
    """Vertical summation matrix T (eta = b + T h), its inverse difference
    matrix D, and the density coupling R = T^T diag(drho) T with entries
    R[k,l] = rho_min(k,l)."""

    rho: np.ndarray
    T: np.ndarray
    D: np.ndarray
    R: np.ndarray
    delta_rho: np.ndarray

    @staticmethod
    def from_rho(rho) -> "LayerMatrices":
        rho = np.asarray(rho, dtype=float)
        L = len(rho)
        drho = np.diff(np.concatenate([[0.0], rho]))
        T = np.triu(np.ones((L, L)))
        D = np.eye(L) - np.eye(L, k=1)
        R = T.T @ np.diag(drho) @ T
        return LayerMatrices(rho=rho, T=T, D=D, R=R, delta_rho=drho)


@dataclasses.dataclass
class ModelConfig:
    """Physical configuration of a multilayer run.

    Densities must increase strictly with depth; reference interfaces
    eta0 must decrease strictly with eta0[0] = 0 (the rest sea surface).
    """

    g: float
    rho: np.ndarray            # (L,)
    f_vertex: np.ndarray       # (n_vertices,) Coriolis at vertices
    bathymetry: np.ndarray     # (n_cells,) b < 0 on wet cells
    eta0: np.ndarray           # (L,) rest interface heights

    tau_wind: np.ndarray | None = None   # (n_edges,) wind stress . n_e
    c_drag: float = 0.0
    nu_h: float = 0.0
    nu_v: float = 0.0

    wind_on: bool = False
    drag_on: bool = False
    biharmonic_on: bool = False
    vertical_visc_on: bool = False

    h_min: float = 1e-3

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.eta0 = np.asarray(self.eta0, dtype=float)
        if len(self.rho) != len(self.eta0):
            raise ValueError("rho and eta0 must have one entry per layer")
        if not (np.diff(self.rho) > 0).all():
            raise ValueError("layer densities must be strictly increasing")
        if self.eta0[0] != 0.0:
            raise ValueError("eta0[0] must be 0 (rest sea surface)")
        if not (np.diff(self.eta0) < 0).all():
            raise ValueError("eta0 must be strictly decreasing")
        self.layers = LayerMatrices.from_rho(self.rho)

    @property
    def n_layers(self) -> int:
        return len(self.rho)


def check_state(state: LayeredState, cell_wet: np.ndarray,
                h_min: float) -> None:
    """Hard checks used by the steppers: NaN anywhere, or wet thickness
    below the out-cropping floor."""
    if np.isnan(state.u).any():
        k, e = np.argwhere(np.isnan(state.u))[0]
        raise ModelStateError(f"NaN velocity at layer {k}, edge {e}")
    if np.isnan(state.h).any():
        k, i = np.argwhere(np.isnan(state.h))[0]
        raise ModelStateError(f"NaN thickness at layer {k}, cell {i}")
    wet_h = np.where(cell_wet, state.h, np.inf)
    if (wet_h < h_min).any():
        k, i = np.argwhere(wet_h < h_min)[0]
        raise OutcroppingError(
            f"layer {k} thickness {state.h[k, i]:.3e} m below floor "
            f"{h_min:.3e} m at cell {i}")


def uniform_coriolis(mesh: Mesh, f0: float) -> np.ndarray:
    return np.full(mesh.n_vertices, f0)
