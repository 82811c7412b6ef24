"""Energetically consistent layer reduction onto the barotropic mode.

The reduced space holds one (cell, edge) field pair.  The prolongation
stacks it into layers through the ansatz

    Psi = diag(y, 1),   y_k = h_ref_k / h_hat,   h_hat = sum_k h_ref_k,

and the restriction is the pseudoinverse in the energy inner product,
Psi_dag = (Psi^T d2H Psi)^{-1} Psi^T d2H, computed in closed form per
cell/edge stack.  P = Psi Psi_dag is the energy-orthogonal projection
and the reduced operator is A_hat = Psi_dag A Psi.

Two variants ship: the standard barotropic reduction, and a
total-mass-conserving one in which the height block of the Hessian is
replaced by the cell-wise rank-one matrix g rho rho^T / rho_hat, making
Psi_dag's height row rho^T / rho_hat so that rho^T Psi Psi_dag = rho^T
and the projected dynamics annihilate the mass functional.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from mlswe import operators as ops
from mlswe.krylov import KrylovBasis, KrylovPolicy, phi_apply
from mlswe.linops import ReferenceOperator, StateLayout


@dataclasses.dataclass(frozen=True)
class ReducedLayout:
    n_cells: int
    n_edges: int

    @property
    def size(self) -> int:
        return self.n_cells + self.n_edges

    def split(self, vec):
        return vec[..., :self.n_cells], vec[..., self.n_cells:]

    def pack(self, hc, ue):
        return np.concatenate([hc, ue], axis=-1)


class LayerReduction:
    """Barotropic (single-mode) reduction bound to a reference operator."""

    def __init__(self, op: ReferenceOperator, kind: str = "barotropic"):
        if kind not in ("barotropic", "mass-conserving"):
            raise ValueError(f"unknown reduction kind {kind!r}")
        self.kind = kind
        self.op = op
        mesh = op.mesh
        cfg = op.cfg
        self.layout = op.layout
        self.reduced_layout = ReducedLayout(mesh.n_cells, mesh.n_edges)

        h_ref = op.h_ref
        rho = cfg.rho
        R = cfg.layers.R

        h_hat = h_ref.sum(axis=0)
        wet_col = h_hat > 0.0
        y = np.divide(h_ref, h_hat, out=np.zeros_like(h_ref),
                      where=wet_col)
        rho_hat = np.divide(np.einsum("k,ki->i", rho, h_ref), h_hat,
                            out=np.ones(mesh.n_cells), where=wet_col)

        self.h_hat = h_hat
        self.rho_hat = rho_hat
        self.psi_h = y                          # (L, nc)
        self.psi_u = np.where(op.masks.edge_wet, 1.0, 0.0)  # (L, ne)

        rho_h_edge = np.einsum("k,ke->e", rho, op.h_ref_edge)
        self.d2h_hat_edge = rho_h_edge          # <rho_hat h_hat>_E
        psid_u = np.divide(rho[:, None] * op.h_ref_edge, rho_h_edge,
                           out=np.zeros_like(op.h_ref_edge),
                           where=rho_h_edge > 0.0)
        self.psid_u = psid_u

        if kind == "barotropic":
            r_hat = np.einsum("ki,kl,li->i", y, R, y)
            r_hat[~wet_col] = 1.0
            self.d2h_hat_cell = cfg.g * r_hat
            ry = np.einsum("kl,li->ki", R, y)
            self.psid_h = ry / r_hat
            self._a_full = op.apply
        else:
            self.d2h_hat_cell = cfg.g * rho_hat
            self.psid_h = np.where(wet_col, rho[:, None] / rho_hat, 0.0)
            self._a_full = op.apply_mass_conserving
        self.psid_h = np.where(wet_col, self.psid_h, 0.0)

        mesh_area = mesh.area_cell
        self._mhat_c = mesh_area * self.d2h_hat_cell
        self._mhat_e = mesh.area_edge * self.d2h_hat_edge
        self._spectral_radius = None

    # -- maps -----------------------------------------------------------

    def prolong(self, red: np.ndarray) -> np.ndarray:
        hc, ue = self.reduced_layout.split(red)
        return self.layout.pack(self.psi_h * hc, self.psi_u * ue)

    def restrict(self, full: np.ndarray) -> np.ndarray:
        h, u = self.layout.split(full)
        return self.reduced_layout.pack(
            np.einsum("ki,ki->i", self.psid_h, h),
            np.einsum("ke,ke->e", self.psid_u, u))

    def project(self, full: np.ndarray) -> np.ndarray:
        return self.prolong(self.restrict(full))

    def reduced_apply(self, red: np.ndarray) -> np.ndarray:
        """A_hat = Psi_dag A Psi (A from the variant's Hessian)."""
        return self.restrict(self._a_full(self.prolong(red)))

    def projected_apply(self, full: np.ndarray) -> np.ndarray:
        """A_P = P A P = Psi A_hat Psi_dag."""
        return self.prolong(self.reduced_apply(self.restrict(full)))

    # -- reduced inner product -------------------------------------------

    def mhat_dot(self, x: np.ndarray, y: np.ndarray) -> float:
        xh, xu = self.reduced_layout.split(x)
        yh, yu = self.reduced_layout.split(y)
        return float(np.sum(xh * yh * self._mhat_c)
                     + np.sum(xu * yu * self._mhat_e))

    def spectral_radius(self, max_iters: int = 200, rtol: float = 1e-6,
                        seed: int = 0) -> float:
        if self._spectral_radius is not None:
            return self._spectral_radius
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.reduced_layout.size)
        lam = 0.0
        for _ in range(max_iters):
            z = self.reduced_apply(self.reduced_apply(x))
            lam_new = math.sqrt(max(-self.mhat_dot(x, z), 0.0)
                                / self.mhat_dot(x, x))
            nrm = math.sqrt(max(self.mhat_dot(z, z), 0.0))
            if nrm == 0.0:
                break
            x = -z / nrm
            if lam > 0 and abs(lam_new - lam) < rtol * lam_new:
                lam = lam_new
                break
            lam = lam_new
        self._spectral_radius = lam
        return lam


def build_barotropic_reduction(op: ReferenceOperator) -> LayerReduction:
    return LayerReduction(op, kind="barotropic")


def build_mass_conserving_reduction(op: ReferenceOperator) -> LayerReduction:
    return LayerReduction(op, kind="mass-conserving")


def phi_of_projected(red: LayerReduction, s: int, dt: float, b: np.ndarray,
                     policy: KrylovPolicy, scale: float = 1.0,
                     gamma: float | None = None, p: int = 2,
                     basis: KrylovBasis | None = None):
    """phi_s(scale dt A_P) b = (1/s!) (I - P) b
    + Psi phi_s(scale dt A_hat) Psi_dag b, with the small phi evaluated by
    a Krylov process in the reduced energy inner product."""
    b_hat = red.restrict(b)
    out = (b - red.prolong(b_hat)) / math.factorial(s)
    red_phi, basis = phi_apply(red.reduced_apply, red.mhat_dot, s, dt, b_hat,
                               policy, skew=True, scale=scale, gamma=gamma,
                               p=p, basis=basis)
    return out + red.prolong(red_phi), basis
