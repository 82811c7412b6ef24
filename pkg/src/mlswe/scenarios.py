"""Initial conditions and test-basin setups.

The gravity-wave and geostrophic cases perturb the rest sea surface with
a Gaussian bump (by default 2 m tall with a 200 km radius); the
geostrophic variant adds the balancing velocity through a discrete
stream function, so its discrete divergence vanishes identically.  The
wind-driven basin is a radially symmetric shelf-bowl (2.5 km deep center,
100 m shelf) with a zonal double-gyre wind profile, quadratic bottom
drag and biharmonic smoothing.
"""

from __future__ import annotations

import numpy as np

from mlswe import operators as ops
from mlswe.mesh.core import PLANAR, Mesh
from mlswe.mesh.masks import LayerMasks, apply_dry_mask, rest_thickness
from mlswe.state import LayeredState, ModelConfig

EARTH_RADIUS = 6371.22e3
OMEGA_EARTH = 7.292e-5
SOMA_LAT_DEG = 35.0


def domain_center(mesh: Mesh):
    if mesh.geometry == PLANAR:
        return 0.5 * mesh.domain_size
    lat = np.deg2rad(SOMA_LAT_DEG)
    return np.array([np.cos(lat), 0.0, np.sin(lat)])


def distance_from(mesh: Mesh, pos: np.ndarray, center: np.ndarray):
    """Distance (m) from a reference point; geodesic on the sphere,
    minimum-image on the periodic plane."""
    if mesh.geometry == PLANAR:
        d = mesh.displacement(np.broadcast_to(center, pos.shape), pos)
        return np.linalg.norm(d, axis=-1)
    radius = mesh.domain_size[0]
    dots = np.clip(pos @ center, -1.0, 1.0)
    return radius * np.arccos(dots)


def gaussian_ssh(mesh: Mesh, pos: np.ndarray, eta_bar: float, sigma: float,
                 center=None) -> np.ndarray:
    if center is None:
        center = domain_center(mesh)
    r = distance_from(mesh, pos, center)
    return eta_bar * np.exp(-r ** 2 / (2.0 * sigma ** 2))


def gravity_wave_ic(mesh: Mesh, cfg: ModelConfig, eta_bar: float = 2.0,
                    sigma: float = 200e3, center=None) -> LayeredState:
    """Gaussian free-surface bump, zero initial velocity."""
    h = rest_thickness(cfg.bathymetry, cfg.eta0)
    h[0] = h[0] + gaussian_ssh(mesh, mesh.cell_center, eta_bar, sigma, center)
    return LayeredState(h, np.zeros((cfg.n_layers, mesh.n_edges)))


def geostrophic_ic(mesh: Mesh, cfg: ModelConfig, eta_bar: float = 2.0,
                   sigma: float = 200e3, center=None) -> LayeredState:
    """Gaussian bump with the balancing velocity u0 = (g/f_c) k x grad eta0.

    u0 comes from the perpendicular gradient of the vertex stream function
    (g/f_c) eta0, which makes div u0 = 0 exactly on the C-grid.
    """
    if center is None:
        center = domain_center(mesh)
    state = gravity_wave_ic(mesh, cfg, eta_bar, sigma, center)
    # Coriolis parameter at the domain center: nearest vertex value
    vdist = distance_from(mesh, mesh.vertex_pos, center)
    f_c = cfg.f_vertex[np.argmin(vdist)]
    psi = (cfg.g / f_c) * gaussian_ssh(mesh, mesh.vertex_pos, eta_bar,
                                       sigma, center)
    state.u[0] = ops.perp_grad(mesh, psi)
    state.u[0][~np.isfinite(state.u[0])] = 0.0
    return state


def shelf_bowl_bathymetry(mesh: Mesh, basin_radius: float = 1250e3,
                          shelf_width: float = 250e3,
                          depth_center: float = 2500.0,
                          depth_shelf: float = 100.0,
                          land_height: float = 50.0,
                          center=None) -> np.ndarray:
    """Radially symmetric bowl: full depth inside, a smooth cosine ramp up
    to the shelf depth over the outer ``shelf_width`` of the basin, land
    (positive b) outside the basin radius."""
    if center is None:
        center = domain_center(mesh)
    r = distance_from(mesh, mesh.cell_center, center)
    ramp = np.clip((r - (basin_radius - shelf_width)) / shelf_width, 0.0, 1.0)
    depth = depth_shelf + (depth_center - depth_shelf) * np.cos(0.5 * np.pi * ramp) ** 2
    b = -depth
    b[r > basin_radius] = land_height
    return b


def double_gyre_wind(mesh: Mesh, tau0: float = 0.1,
                     basin_radius: float = 1250e3, center=None) -> np.ndarray:
    """Zonal wind stress, easterly in the basin center and westerly at its
    northern and southern rims; projected onto edge normals."""
    if center is None:
        center = domain_center(mesh)
    if mesh.geometry == PLANAR:
        yrel = mesh.displacement(
            np.broadcast_to(center, mesh.edge_pos.shape), mesh.edge_pos)[:, 1]
        zonal = np.zeros((mesh.n_edges, 2))
        zonal[:, 0] = 1.0
    else:
        radius = mesh.domain_size[0]
        lat = np.arcsin(np.clip(mesh.edge_pos[:, 2], -1.0, 1.0))
        lat_c = np.arcsin(np.clip(center[2], -1.0, 1.0))
        yrel = radius * (lat - lat_c)
        east = np.stack([-mesh.edge_pos[:, 1], mesh.edge_pos[:, 0],
                         np.zeros(mesh.n_edges)], axis=1)
        nrm = np.linalg.norm(east, axis=1)
        zonal = east / np.where(nrm > 0, nrm, 1.0)[:, None]
    tau_x = -tau0 * np.cos(np.pi * np.clip(yrel / basin_radius, -1.0, 1.0))
    tau_x[np.abs(yrel) > basin_radius] = tau0
    nhat = mesh.edge_normal()
    return tau_x * np.einsum("ej,ej->e", zonal, nhat)


def coriolis_field(mesh: Mesh, f0: float | None = None,
                   beta: float | None = None, center=None) -> np.ndarray:
    """Coriolis at vertices: 2 Omega sin(lat) on the sphere, beta-plane
    about the domain center on the plane (mid-latitude defaults)."""
    if mesh.geometry != PLANAR:
        radius_lat = np.arcsin(np.clip(mesh.vertex_pos[:, 2], -1.0, 1.0))
        return 2.0 * OMEGA_EARTH * np.sin(radius_lat)
    if center is None:
        center = domain_center(mesh)
    lat = np.deg2rad(SOMA_LAT_DEG)
    if f0 is None:
        f0 = 2.0 * OMEGA_EARTH * np.sin(lat)
    if beta is None:
        beta = 2.0 * OMEGA_EARTH * np.cos(lat) / EARTH_RADIUS
    yrel = mesh.displacement(
        np.broadcast_to(center, mesh.vertex_pos.shape), mesh.vertex_pos)[:, 1]
    return f0 + beta * yrel


def soma_setup(mesh: Mesh, n_layers: int = 3, g: float = 9.81,
               rho=None, eta0=None, tau0: float = 0.1,
               c_drag: float = 1e-3, nu_h: float = 2e10, nu_v: float = 1e-4,
               basin_radius: float = 1250e3, shelf_width: float = 250e3,
               depth_center: float = 2500.0, depth_shelf: float = 100.0,
               wind_on: bool = True, drag_on: bool = True,
               biharmonic_on: bool = True, vertical_visc_on: bool = True,
               ) -> tuple[ModelConfig, LayerMasks]:
    """Wind-driven shelf-bowl basin in the style of a mid-latitude
    regional model: 2500 km across, 2.5 km deep at the center, 100 m on
    the coastal shelf, double-gyre zonal wind, quadratic bottom drag and
    biharmonic smoothing.  Layer interfaces default to even slices of the
    center depth."""
    if rho is None:
        rho = {1: [1025.0], 2: [1025.0, 1027.0],
               3: [1025.0, 1027.0, 1028.0]}.get(n_layers)
        if rho is None:
            rho = list(1025.0 + np.arange(n_layers))
    if eta0 is None:
        eta0 = [-depth_center * k / n_layers for k in range(n_layers)]
    center = domain_center(mesh)
    b = shelf_bowl_bathymetry(mesh, basin_radius, shelf_width,
                              depth_center, depth_shelf, center=center)
    cfg = ModelConfig(
        g=g, rho=np.asarray(rho, dtype=float),
        f_vertex=coriolis_field(mesh, center=center),
        bathymetry=b, eta0=np.asarray(eta0, dtype=float),
        tau_wind=double_gyre_wind(mesh, tau0, basin_radius, center),
        c_drag=c_drag, nu_h=nu_h, nu_v=nu_v,
        wind_on=wind_on, drag_on=drag_on, biharmonic_on=biharmonic_on,
        vertical_visc_on=vertical_visc_on and n_layers > 1,
    )
    masks = apply_dry_mask(mesh, b, cfg.eta0)
    return cfg, masks


def rest_state(mesh: Mesh, cfg: ModelConfig) -> LayeredState:
    return LayeredState(rest_thickness(cfg.bathymetry, cfg.eta0),
                        np.zeros((cfg.n_layers, mesh.n_edges)))
