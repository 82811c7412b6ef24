"""Reference-state linear operators and weighted inner products.

The ETD linear operator is the wave operator obtained by linearizing the
ideal dynamics at a rest configuration (h_ref, 0):

    A W = ( -div( <h_ref>_E * w_u ) ;
            -(g/rho_k) grad( (R w_h)_k ) + Qbar( <h_ref>_E * w_u ) )

with Qbar the potential-vorticity flux frozen at q = f / <h_ref>_V.
A is skew-symmetric in the energy inner product M_H = M_X d2H, where
d2H is the (block-diagonal) energy Hessian at the reference.  States are
handled as flat vectors [h.ravel(), u.ravel()] so the Krylov machinery
can treat them as plain vectors.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from mlswe import model
from mlswe import operators as ops
from mlswe.mesh.core import Mesh
from mlswe.mesh.masks import LayerMasks
from mlswe.state import LayeredState, ModelConfig


@dataclasses.dataclass(frozen=True)
class StateLayout:
    n_layers: int
    n_cells: int
    n_edges: int

    @property
    def size(self) -> int:
        return self.n_layers * (self.n_cells + self.n_edges)

    def split(self, vec: np.ndarray):
        nh = self.n_layers * self.n_cells
        return (vec[..., :nh].reshape(*vec.shape[:-1], self.n_layers, self.n_cells),
                vec[..., nh:].reshape(*vec.shape[:-1], self.n_layers, self.n_edges))

    def pack(self, h: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.concatenate([h.reshape(*h.shape[:-2], -1),
                               u.reshape(*u.shape[:-2], -1)], axis=-1)

    def to_state(self, vec: np.ndarray) -> LayeredState:
        h, u = self.split(vec)
        return LayeredState(h.copy(), u.copy())


class ReferenceOperator:
    """Matrix-free reference wave operator with its weighted inner products."""

    def __init__(self, mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                 h_ref: np.ndarray):
        self.mesh = mesh
        self.masks = masks
        self.cfg = cfg
        self.h_ref = h_ref
        self.layout = StateLayout(cfg.n_layers, mesh.n_cells, mesh.n_edges)

        he = ops.cell_to_edge(mesh, h_ref)
        he[~masks.edge_wet] = 0.0
        self.h_ref_edge = he

        hv = ops.cell_to_vertex(mesh, h_ref)
        q = np.divide(cfg.f_vertex, hv, out=np.zeros_like(hv), where=hv > 0.0)
        q[~masks.vertex_wet] = 0.0
        self.q_ref_edge = ops.vertex_to_edge(mesh, q)

        rho = cfg.rho
        area_c = mesh.area_cell
        area_e = mesh.area_edge
        self._mx_h = np.broadcast_to(area_c, (cfg.n_layers, mesh.n_cells))
        self._mx_u = np.broadcast_to(area_e, (cfg.n_layers, mesh.n_edges))
        self._mh_u = rho[:, None] * he * area_e
        self._R_area = cfg.g * area_c  # pairs with the layer matrix R
        self._spectral_radius = None

    # -- inner products ------------------------------------------------

    def mx_dot(self, x: np.ndarray, y: np.ndarray) -> float:
        xh, xu = self.layout.split(x)
        yh, yu = self.layout.split(y)
        return float(np.sum(xh * yh * self._mx_h) + np.sum(xu * yu * self._mx_u))

    def mh_dot(self, x: np.ndarray, y: np.ndarray) -> float:
        xh, xu = self.layout.split(x)
        yh, yu = self.layout.split(y)
        R = self.cfg.layers.R
        hpart = np.einsum("i,ki,kl,li->", self._R_area, xh, R, yh)
        return float(hpart + np.sum(xu * yu * self._mh_u))

    def mh_norm(self, x: np.ndarray) -> float:
        return np.sqrt(max(self.mh_dot(x, x), 0.0))

    # -- operator pieces -----------------------------------------------

    def j_apply(self, vec: np.ndarray) -> np.ndarray:
        """Skew factor J at the reference: the Hamiltonian structure matrix
        with the potential-vorticity flux frozen at f / <h_ref>_V."""
        xh, xu = self.layout.split(vec)
        rho = self.cfg.rho[:, None]
        dh = -ops.divergence(self.mesh, xu) / rho
        dh[~self.masks.cell_wet] = 0.0
        du = (-ops.gradient(self.mesh, xh)
              + model.q_apply(self.mesh, self.q_ref_edge, xu)) / rho
        du[~self.masks.edge_wet] = 0.0
        return self.layout.pack(dh, du)

    def d2h_apply(self, vec: np.ndarray) -> np.ndarray:
        """Energy Hessian at the reference: block diagonal
        (g R w_h ; rho_k <h_ref>_E w_u)."""
        wh, wu = self.layout.split(vec)
        xh = self.cfg.g * np.einsum("kl,li->ki", self.cfg.layers.R, wh)
        xu = self.cfg.rho[:, None] * self.h_ref_edge * wu
        return self.layout.pack(xh, xu)

    def d2h_mass_conserving_apply(self, vec: np.ndarray) -> np.ndarray:
        """Rank-one height-block variant g rho rho^T / rho_hat used by the
        total-mass-conserving barotropic reduction."""
        wh, wu = self.layout.split(vec)
        rho = self.cfg.rho
        hhat = self.h_ref.sum(axis=0)
        rhohat_h = np.einsum("k,ki->i", rho, self.h_ref)
        rho_hat = np.divide(rhohat_h, hhat, out=np.ones_like(hhat),
                            where=hhat > 0.0)
        proj = np.einsum("k,ki->i", rho, wh) / rho_hat
        xh = self.cfg.g * rho[:, None] * proj
        xh[~self.masks.cell_wet] = 0.0
        xu = rho[:, None] * self.h_ref_edge * wu
        return self.layout.pack(xh, xu)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.j_apply(self.d2h_apply(vec))

    def apply_mass_conserving(self, vec: np.ndarray) -> np.ndarray:
        return self.j_apply(self.d2h_mass_conserving_apply(vec))

    # -- spectral radius -----------------------------------------------

    def spectral_radius(self, max_iters: int = 200, rtol: float = 1e-6,
                        seed: int = 0) -> float:
        """|A| by power iteration on A∘A (symmetric negative in M_H)."""
        if self._spectral_radius is not None:
            return self._spectral_radius
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.layout.size)
        xh, xu = self.layout.split(x)
        xh[~self.masks.cell_wet] = 0.0
        xu[~self.masks.edge_wet] = 0.0
        lam = 0.0
        for _ in range(max_iters):
            y = self.apply(self.apply(x))
            denom = self.mh_dot(x, x)
            lam_new = np.sqrt(max(-self.mh_dot(x, y), 0.0) / denom)
            nrm = self.mh_norm(y)
            if nrm == 0.0:
                break
            x = -y / nrm
            if lam > 0 and abs(lam_new - lam) < rtol * lam_new:
                lam = lam_new
                break
            lam = lam_new
        self._spectral_radius = float(lam)
        return self._spectral_radius


def reference_operator(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                       h_ref: np.ndarray) -> ReferenceOperator:
    return ReferenceOperator(mesh, masks, cfg, h_ref)


def d2h_apply_general(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                      state: LayeredState, w: LayeredState) -> LayeredState:
    """Energy Hessian at a general state (h, u):

        ( g (R w_h)_k + rho_k <u_k * w_u_k>_I ;
          rho_k u_k <w_h_k>_E + rho_k <h_k>_E w_u_k )
    """
    rho = cfg.rho[:, None]
    xh = cfg.g * np.einsum("kl,li->ki", cfg.layers.R, w.h) \
        + rho * ops.edge_to_cell(mesh, state.u * w.u)
    he = ops.cell_to_edge(mesh, state.h)
    he[~masks.edge_wet] = 0.0
    xu = rho * (state.u * ops.cell_to_edge(mesh, w.h) + he * w.u)
    xu[~masks.edge_wet] = 0.0
    return LayeredState(xh, xu)


def full_jacobian_apply(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                        state: LayeredState, w: LayeredState) -> LayeredState:
    """Directional derivative of the ideal tendency,
    F'[V; W] = J'[V; W] dH[V] + J[V] d2H[V] W."""
    rho = cfg.rho[:, None]
    h, u = state.h, state.u

    hv = ops.cell_to_vertex(mesh, h)
    curl_u = ops.curl(mesh, u)
    qnum = curl_u + cfg.f_vertex
    q = np.divide(qnum, hv, out=np.zeros_like(qnum), where=hv > 0.0)
    wh_v = ops.cell_to_vertex(mesh, w.h)
    qprime = np.divide(ops.curl(mesh, w.u) - q * wh_v, hv,
                       out=np.zeros_like(qnum), where=hv > 0.0)
    qprime[~masks.vertex_wet] = 0.0
    qe = ops.vertex_to_edge(mesh, q)
    qpe = ops.vertex_to_edge(mesh, qprime)

    he = ops.cell_to_edge(mesh, h)
    he[~masks.edge_wet] = 0.0
    flux_ref = he * u

    x = d2h_apply_general(mesh, masks, cfg, state, w)

    dh = -ops.divergence(mesh, x.u) / rho
    dh[~masks.cell_wet] = 0.0
    du = (-ops.gradient(mesh, x.h)
          + model.q_apply(mesh, qe, x.u)) / rho
    du += model.q_apply(mesh, qpe, flux_ref)
    du[~masks.edge_wet] = 0.0
    return LayeredState(dh, du)
