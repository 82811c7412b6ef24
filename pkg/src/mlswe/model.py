"""Multilayer shallow water dynamics on the C-grid.

Diagnostics (kinetic energy, potential vorticity, pressure), the energy
functional and its gradient, the nonlinear tendency, forcing and
dissipation terms, and conserved quantities.

Per layer k the ideal equations read

    dh_k/dt = -div( <h_k>_E * u_k )
    du_k/dt = Q[h_k,u_k]( <h_k>_E * u_k )
              - grad( K[u_k] + (g/rho_k) p_k[h] ) + G_k

with Q y = ( <q>_E * perp(y) + perp(<q>_E * y) ) / 2 and potential
vorticity q = (curl u + f) / <h>_V.  perp is the tangential-velocity
reconstruction (it returns t.u, the normal component of -k x u), so +Q
carries the continuum Coriolis torque -q k x (h u).  Q is skew in the
edge inner product,
so the system has the structure dV/dt = J[V] dH[V] with skew J and energy

    H[V] = sum_k rho_k <h_k, K[u_k]>_I + (g/2) sum_k drho_k <eta_k, eta_k>_I.
"""

from __future__ import annotations

import numpy as np

from mlswe import operators as ops
from mlswe.mesh.core import Mesh
from mlswe.mesh.masks import LayerMasks
from mlswe.state import (LayeredState, ModelConfig, OutcroppingError,
                         check_state)


def kinetic_energy(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """K[u] = <u*u>_I / 2 per cell; broadcasts over layers."""
    return 0.5 * ops.edge_to_cell(mesh, u * u)


def potential_vorticity(mesh: Mesh, masks: LayerMasks, h: np.ndarray,
                        u: np.ndarray, f_vertex: np.ndarray) -> np.ndarray:
    """q = (curl u + f) / <h>_V per layer; zero on dry vertices.

    Raises OutcroppingError when the interpolated thickness is not
    positive at a vertex that touches wet edges.
    """
    hv = ops.cell_to_vertex(mesh, h)
    bad = masks.vertex_wet & (hv <= 0.0)
    if bad.any():
        k, v = np.argwhere(bad)[0]
        raise OutcroppingError(
            f"nonpositive vertex thickness {hv[k, v]:.3e} m in layer {k} "
            f"at vertex {v}")
    num = ops.curl(mesh, u) + f_vertex
    return np.divide(num, hv, out=np.zeros_like(num), where=hv > 0.0)


def pressure(cfg: ModelConfig, h: np.ndarray) -> np.ndarray:
    """Layer pressures p_k = rho_k eta_k + sum_{l<k} rho_l h_l."""
    eta = cfg.bathymetry + cfg.layers.T @ h
    below = np.cumsum(cfg.rho[:, None] * h, axis=0) - cfg.rho[:, None] * h
    return cfg.rho[:, None] * eta + below


def sea_surface_height(cfg: ModelConfig, h: np.ndarray) -> np.ndarray:
    return cfg.bathymetry + h.sum(axis=0)


def q_apply(mesh: Mesh, q_edge: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Symmetrized potential-vorticity flux operator (skew in M_E)."""
    return 0.5 * (q_edge * ops.perp_flux(mesh, y)
                  + ops.perp_flux(mesh, q_edge * y))


def tendency_ideal(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                   state: LayeredState) -> LayeredState:
    """J[V] dH[V]: the unforced tendency."""
    h, u = state.h, state.u
    he = ops.cell_to_edge(mesh, h)
    he[~masks.edge_wet] = 0.0
    flux = he * u

    dh = -ops.divergence(mesh, flux)
    dh[~masks.cell_wet] = 0.0

    q = potential_vorticity(mesh, masks, h, u, cfg.f_vertex)
    qe = ops.vertex_to_edge(mesh, q)
    bernoulli = kinetic_energy(mesh, u) \
        + (cfg.g / cfg.rho[:, None]) * pressure(cfg, h)
    du = q_apply(mesh, qe, flux) - ops.gradient(mesh, bernoulli)
    du[~masks.edge_wet] = 0.0
    return LayeredState(dh, du)


def tendency(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
             state: LayeredState, check: bool = True) -> LayeredState:
    """Full tendency including enabled forcing terms; masked DOFs zero."""
    if check:
        check_state(state, masks.cell_wet, cfg.h_min)
    out = tendency_ideal(mesh, masks, cfg, state)
    g = forcing(mesh, masks, cfg, state)
    if g is not None:
        out.u += g
    return out


def forcing(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
            state: LayeredState) -> np.ndarray | None:
    """Sum of enabled momentum forcing terms, or None when all are off."""
    total = None
    if cfg.wind_on:
        total = forcing_wind(mesh, masks, cfg, state.h)
    if cfg.drag_on:
        d = forcing_drag(mesh, masks, cfg, state.h, state.u)
        total = d if total is None else total + d
    if cfg.biharmonic_on:
        d = forcing_biharmonic(mesh, masks, cfg, state.h, state.u)
        total = d if total is None else total + d
    if cfg.vertical_visc_on:
        d = forcing_vertical_visc(mesh, masks, cfg, state.h, state.u)
        total = d if total is None else total + d
    return total


def _edge_thickness(mesh, masks, h, layer):
    he = ops.cell_to_edge(mesh, h[layer])
    return np.where(masks.edge_wet[layer], he, 0.0)


def forcing_wind(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                 h: np.ndarray) -> np.ndarray:
    """Surface stress acceleration tau / <rho_1 h_1>_E in the top layer."""
    out = np.zeros((cfg.n_layers, mesh.n_edges))
    he = _edge_thickness(mesh, masks, h, 0)
    denom = cfg.rho[0] * he
    out[0] = np.divide(cfg.tau_wind, denom, out=np.zeros(mesh.n_edges),
                       where=denom > 0.0)
    out[0][~masks.edge_wet[0]] = 0.0
    return out


def forcing_drag(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                 h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Quadratic bottom drag -c_drag <|u|>_E u / (rho <h>_E), bottom layer."""
    out = np.zeros((cfg.n_layers, mesh.n_edges))
    bot = cfg.n_layers - 1
    speed = ops.cell_to_edge(
        mesh, np.sqrt(2.0 * kinetic_energy(mesh, u[bot])))
    he = _edge_thickness(mesh, masks, h, bot)
    denom = cfg.rho[bot] * he
    coef = np.divide(cfg.c_drag * speed, denom,
                     out=np.zeros(mesh.n_edges), where=denom > 0.0)
    out[bot] = -coef * u[bot]
    out[bot][~masks.edge_wet[bot]] = 0.0
    return out


def forcing_biharmonic(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                       h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Energetically consistent biharmonic: -(1/<h>) L(nu_h <h> L u) with
    L = grad div - sqrt(3) pgrad curl, all layers."""
    out = np.empty((cfg.n_layers, mesh.n_edges))
    for k in range(cfg.n_layers):
        he = _edge_thickness(mesh, masks, h, k)
        lap = ops.vector_laplacian(mesh, u[k])
        inner = cfg.nu_h * he * lap
        out[k] = -np.divide(ops.vector_laplacian(mesh, inner), he,
                            out=np.zeros(mesh.n_edges), where=he > 0.0)
        out[k][~masks.edge_wet[k]] = 0.0
    return out


def forcing_vertical_visc(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                          h: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vertical Laplacian as interface fluxes nu_v (u_{k+1} - u_k) / dz with
    dz = (<h_k>_E + <h_{k+1}>_E)/2; zero stress at surface and bottom (the
    bottom drag acts as its own Robin-like closure).  Simple interface-flux
    form; the operator is layer-coupled but local per edge.
    """
    L = cfg.n_layers
    out = np.zeros((L, mesh.n_edges))
    if L == 1 or cfg.nu_v == 0.0:
        return out
    he = np.stack([_edge_thickness(mesh, masks, h, k) for k in range(L)])
    for k in range(L - 1):
        dz = 0.5 * (he[k] + he[k + 1])
        wet = masks.edge_wet[k] & masks.edge_wet[k + 1] & (dz > 0.0)
        flux = np.where(wet, cfg.nu_v * (u[k + 1] - u[k]) / np.maximum(dz, 1e-30), 0.0)
        out[k] += np.divide(flux, he[k], out=np.zeros_like(flux),
                            where=he[k] > 0.0)
        out[k + 1] -= np.divide(flux, he[k + 1], out=np.zeros_like(flux),
                                where=he[k + 1] > 0.0)
    out[~masks.edge_wet] = 0.0
    return out


def hamiltonian(mesh: Mesh, cfg: ModelConfig, state: LayeredState) -> float:
    """Total energy in joules (columns of unit span assumed; the area
    integral carries the horizontal extent)."""
    k = kinetic_energy(mesh, state.u)
    eta = cfg.bathymetry + cfg.layers.T @ state.h
    kin = np.sum(cfg.rho[:, None] * state.h * k * mesh.area_cell)
    pot = 0.5 * cfg.g * np.sum(
        cfg.layers.delta_rho[:, None] * eta * eta * mesh.area_cell)
    return float(kin + pot)


def delta_h(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
            state: LayeredState) -> LayeredState:
    """Gradient of the energy: (rho_k K + g p_k ; rho_k <h_k>_E u_k)."""
    dh = cfg.rho[:, None] * kinetic_energy(mesh, state.u) \
        + cfg.g * pressure(cfg, state.h)
    he = ops.cell_to_edge(mesh, state.h)
    du = cfg.rho[:, None] * he * state.u
    du[~masks.edge_wet] = 0.0
    return LayeredState(dh, du)


def layer_volumes(mesh: Mesh, h: np.ndarray) -> np.ndarray:
    return np.sum(h * mesh.area_cell, axis=-1)


def total_mass(mesh: Mesh, cfg: ModelConfig, h: np.ndarray) -> float:
    return float(np.sum(cfg.rho * layer_volumes(mesh, h)))


def vertical_modes(h0: np.ndarray, rho: np.ndarray, g: float):
    """Eigenpairs of the vertical operator g diag(h0/rho) R, sorted from
    the fastest (barotropic) mode down.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns;
    sqrt(eigenvalue) is the gravity-wave speed of each mode.
    """
    from mlswe.state import LayerMatrices

    h0 = np.asarray(h0, dtype=float)
    rho = np.asarray(rho, dtype=float)
    R = LayerMatrices.from_rho(rho).R
    A = g * np.diag(h0 / rho) @ R
    vals, vecs = np.linalg.eig(A)
    order = np.argsort(-vals.real)
    vals = vals[order].real
    vecs = vecs[:, order].real
    # fix sign: make each mode's largest component positive
    for j in range(vecs.shape[1]):
        i = np.argmax(np.abs(vecs[:, j]))
        if vecs[i, j] < 0:
            vecs[:, j] *= -1
    return vals, vecs
