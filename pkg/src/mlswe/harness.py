"""Run driver: configuration, time loop, diagnostics, snapshots, and the
convergence / Courant / statistics operations behind the CLI."""

from __future__ import annotations

import dataclasses
import glob
import os
import time as _time

import numpy as np

from mlswe import model, scenarios
from mlswe.krylov import KrylovConvergenceError, KrylovPolicy
from mlswe.linops import ReferenceOperator
from mlswe.mesh import (Mesh, build_planar_hex_mesh, build_spherical_mesh,
                        load_mesh)
from mlswe.mesh.masks import LayerMasks, all_wet, apply_dry_mask, rest_thickness
from mlswe.state import (LayeredState, ModelConfig, ModelStateError,
                         OutcroppingError, uniform_coriolis)
from mlswe import steppers
from mlswe.steppers import EtdScheme, EtdStepper, StepStats, rk4_step


class ConfigError(Exception):
    pass


# ----------------------------------------------------------------------
# configuration

def load_config(path: str) -> dict:
    import yaml
    with open(path) as f:
        cfg = yaml.safe_load(f)
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} did not parse to a mapping")
    return cfg


def build_mesh(mesh_cfg: dict) -> Mesh:
    kind = mesh_cfg.get("kind", "planar")
    if kind == "planar":
        return build_planar_hex_mesh(int(mesh_cfg["nx"]), int(mesh_cfg["ny"]),
                                     float(mesh_cfg["dc"]))
    if kind == "sphere":
        return build_spherical_mesh(int(mesh_cfg.get("level", 3)),
                                    int(mesh_cfg.get("lloyd", 0)),
                                    float(mesh_cfg.get("radius",
                                                       scenarios.EARTH_RADIUS)))
    if kind == "file":
        return load_mesh(mesh_cfg["path"])
    raise ConfigError(f"unknown mesh kind {kind!r}")


@dataclasses.dataclass
class Problem:
    mesh: Mesh
    cfg: ModelConfig
    masks: LayerMasks
    state0: LayeredState


def build_problem(config: dict) -> Problem:
    mesh = build_mesh(config.get("mesh", {}))
    scen = config.get("scenario", {})
    name = scen.get("name", "gravity-wave")
    phys = config.get("physics", {})
    layers = config.get("layers", {})

    if name == "soma":
        keys = ("n_layers", "g", "rho", "eta0", "tau0", "c_drag", "nu_h",
                "nu_v", "basin_radius", "shelf_width", "depth_center",
                "depth_shelf", "wind_on", "drag_on", "biharmonic_on",
                "vertical_visc_on")
        kw = {k: scen[k] for k in keys if k in scen}
        if "rho" in layers:
            kw["rho"] = layers["rho"]
            kw.setdefault("n_layers", len(layers["rho"]))
        if "eta0" in layers:
            kw["eta0"] = layers["eta0"]
        cfg, masks = scenarios.soma_setup(mesh, **kw)
        state0 = scenarios.rest_state(mesh, cfg)
        return Problem(mesh, cfg, masks, state0)

    rho = np.asarray(layers.get("rho", [1025.0]), dtype=float)
    depth = float(phys.get("flat_depth", 1000.0))
    eta0 = layers.get("eta0")
    if eta0 is None:
        L = len(rho)
        eta0 = [-depth * k / L for k in range(L)]
    b = np.full(mesh.n_cells, -depth)
    f0 = phys.get("f0")
    beta = phys.get("beta")
    if f0 is not None and beta is None:
        f_vertex = uniform_coriolis(mesh, float(f0))
    else:
        f_vertex = scenarios.coriolis_field(
            mesh, None if f0 is None else float(f0),
            None if beta is None else float(beta))
    cfg = ModelConfig(g=float(phys.get("g", 9.81)), rho=rho,
                      f_vertex=f_vertex, bathymetry=b,
                      eta0=np.asarray(eta0, dtype=float))
    masks = apply_dry_mask(mesh, b, cfg.eta0)

    if name == "rest":
        state0 = scenarios.rest_state(mesh, cfg)
    elif name == "gravity-wave":
        state0 = scenarios.gravity_wave_ic(
            mesh, cfg, float(scen.get("eta_bar", 2.0)),
            float(scen.get("sigma", 200e3)))
    elif name == "geostrophic":
        state0 = scenarios.geostrophic_ic(
            mesh, cfg, float(scen.get("eta_bar", 2.0)),
            float(scen.get("sigma", 200e3)))
    else:
        raise ConfigError(f"unknown scenario {name!r}")
    state0.h[~masks.cell_wet] = 0.0
    state0.u[~masks.edge_wet] = 0.0
    return Problem(mesh, cfg, masks, state0)


def make_scheme(scheme_cfg: dict) -> EtdScheme | None:
    name = scheme_cfg.get("name", "rk4")
    if name == "rk4":
        return None
    if name in ("etd1", "euler", "etd-euler"):
        return steppers.exponential_euler()
    if name == "etd2":
        return steppers.etd2(float(scheme_cfg.get("c2", 1.0)))
    if name == "etd3":
        return steppers.etd3(float(scheme_cfg.get("c2", 0.5)),
                             float(scheme_cfg.get("c3", 0.75)))
    raise ConfigError(f"unknown scheme {name!r}")


def make_krylov_policy(kry_cfg: dict, courant: float) -> KrylovPolicy | None:
    policy = kry_cfg.get("policy", "courant")
    if policy == "courant":
        return None  # stepper sizes from its own Courant number
    if policy == "fixed":
        return KrylovPolicy(kind="fixed", m=int(kry_cfg.get("m", 30)))
    if policy == "adaptive":
        return KrylovPolicy.adaptive(
            tol=float(kry_cfg.get("tol", 1e-6)), courant=courant,
            m_max=int(kry_cfg.get("m_max", 500)))
    raise ConfigError(f"unknown krylov policy {policy!r}")


def make_stepper(problem: Problem, config: dict):
    """Returns (advance(state, stats) -> state, scheme_label)."""
    scheme_cfg = config.get("scheme", {})
    time_cfg = config.get("time", {})
    scheme = make_scheme(scheme_cfg)
    dt = resolve_dt(problem, config)
    if scheme is None:
        def advance(state, stats=None):
            if stats is not None:
                stats.tendency_evals += 4
            return rk4_step(problem.mesh, problem.masks, problem.cfg,
                            state, dt)
        return advance, "rk4", dt

    operator = scheme_cfg.get("operator", steppers.REFERENCE_FIXED)
    stepper = EtdStepper(
        problem.mesh, problem.masks, problem.cfg, scheme, operator=operator,
        gamma=scheme_cfg.get("gamma"), p=int(scheme_cfg.get("p", 2)),
        reorth_every=int(config.get("krylov", {}).get("reorth_every", 0)))
    stepper.krylov = make_krylov_policy(config.get("krylov", {}),
                                        stepper.courant(dt))

    def advance(state, stats=None):
        return stepper.step(state, dt, stats=stats)

    return advance, scheme.name, dt


def resolve_dt(problem: Problem, config: dict) -> float:
    time_cfg = config.get("time", {})
    if "dt" in time_cfg and time_cfg["dt"] is not None:
        dt = float(time_cfg["dt"])
    elif "courant" in time_cfg and time_cfg["courant"] is not None:
        op = ReferenceOperator(problem.mesh, problem.masks, problem.cfg,
                               rest_thickness(problem.cfg.bathymetry,
                                              problem.cfg.eta0))
        dt = float(time_cfg["courant"]) / op.spectral_radius()
    else:
        raise ConfigError("time.dt or time.courant is required")
    if dt <= 0:
        raise ConfigError("dt must be positive")
    horizon = float(time_cfg.get("horizon", 0.0))
    if horizon < dt:
        raise ConfigError("horizon must be at least one step")
    return dt


# ----------------------------------------------------------------------
# snapshots and diagnostics

def save_snapshot(path: str, state: LayeredState, time_s: float,
                  step: int) -> None:
    np.savez(path, h=state.h, u=state.u,
             time=np.array(time_s), step=np.array(step))


def load_snapshot(path: str):
    with np.load(path) as data:
        return (LayeredState(data["h"].copy(), data["u"].copy()),
                float(data["time"]), int(data["step"]))


def diag_header(n_layers: int) -> list[str]:
    return (["step", "time", "energy", "total_mass", "max_speed",
             "krylov_m", "wall_time"]
            + [f"volume_{k}" for k in range(n_layers)])


def write_diagnostics(path: str, rows: list[dict], n_layers: int) -> None:
    cols = diag_header(n_layers)
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(repr(row[c]) for c in cols) + "\n")


def read_diagnostics(path: str) -> dict[str, np.ndarray]:
    with open(path) as f:
        cols = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {c: data[:, j] for j, c in enumerate(cols)}


@dataclasses.dataclass
class RunResult:
    status: str                 # "ok" | "aborted"
    reason: str | None
    steps_done: int
    dt: float
    rows: list[dict]
    final_state: LayeredState
    scheme: str


def run(config: dict, out_dir: str | None = None,
        resume_from: str | None = None) -> RunResult:
    """Integrate a configured problem; write diagnostics CSV and snapshot
    files when out_dir is given.  Aborts cleanly on NaN / out-cropping /
    Krylov failure, reporting the step index."""
    problem = build_problem(config)
    advance, scheme_name, dt = make_stepper(problem, config)
    horizon = float(config["time"]["horizon"])
    out_cfg = config.get("output", {})
    cadence = int(out_cfg.get("cadence", 1))
    snap_every = int(out_cfg.get("snapshot_every", 0))

    state = problem.state0
    t0 = 0.0
    step0 = 0
    if resume_from is not None:
        state, t0, step0 = load_snapshot(resume_from)
    n_steps = int(round((horizon - t0) / dt))

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    rows: list[dict] = []
    wall0 = _time.perf_counter()

    def record(step, t, state, krylov_m):
        e = model.hamiltonian(problem.mesh, problem.cfg, state)
        vols = model.layer_volumes(problem.mesh, state.h)
        row = {"step": step, "time": t, "energy": e,
               "total_mass": model.total_mass(problem.mesh, problem.cfg,
                                              state.h),
               "max_speed": float(np.abs(state.u).max()),
               "krylov_m": krylov_m,
               "wall_time": _time.perf_counter() - wall0}
        for k, v in enumerate(vols):
            row[f"volume_{k}"] = float(v)
        rows.append(row)
        if not np.isfinite(e):
            raise ModelStateError(f"non-finite energy at step {step}")

    status, reason = "ok", None
    record(step0, t0, state, 0)
    step = step0
    try:
        for n in range(1, n_steps + 1):
            stats = StepStats()
            state = advance(state, stats)
            step = step0 + n
            t = t0 + n * dt
            if n % cadence == 0 or n == n_steps:
                record(step, t, state, stats.krylov_m)
            if out_dir and snap_every and n % snap_every == 0:
                save_snapshot(os.path.join(out_dir, f"snap_{step:08d}.npz"),
                              state, t, step)
    except (ModelStateError, OutcroppingError, KrylovConvergenceError) as exc:
        status, reason = "aborted", f"step {step + 1}: {exc}"

    if out_dir:
        write_diagnostics(os.path.join(out_dir, "diagnostics.csv"), rows,
                          problem.cfg.n_layers)
        save_snapshot(os.path.join(out_dir, f"snap_{step:08d}.npz"),
                      state, t0 + (step - step0) * dt, step)

    return RunResult(status=status, reason=reason, steps_done=step - step0,
                     dt=dt, rows=rows, final_state=state, scheme=scheme_name)


# ----------------------------------------------------------------------
# statistics over snapshot streams

def thickness_weighted_norm(mesh: Mesh, masks: LayerMasks,
                            h_ref: np.ndarray, u: np.ndarray) -> float:
    """Reference-thickness weighted L2 norm of a layered edge field:
    sqrt( sum_k sum_e (A_e/2) <h_ref_k>_E u^2 )."""
    from mlswe import operators as ops
    he = ops.cell_to_edge(mesh, h_ref)
    he[~masks.edge_wet] = 0.0
    return float(np.sqrt(np.sum(0.5 * mesh.area_edge * he * u * u)))


def statistics(snapshots, mesh: Mesh, cfg: ModelConfig) -> dict:
    """Sample mean flow and pointwise SSH RMS (deviation from the
    temporal mean) over a stream of snapshot files or states."""
    states = []
    for snap in snapshots:
        if isinstance(snap, str):
            states.append(load_snapshot(snap)[0])
        else:
            states.append(snap)
    if not states:
        raise ValueError("no snapshots given")
    u = np.stack([s.u for s in states])
    ssh = np.stack([model.sea_surface_height(cfg, s.h) for s in states])
    mean_u = u.mean(axis=0)
    mean_ssh = ssh.mean(axis=0)
    ssh_rms = np.sqrt(((ssh - mean_ssh) ** 2).mean(axis=0))
    return {"mean_u": mean_u, "mean_ssh": mean_ssh, "ssh_rms": ssh_rms,
            "n_samples": len(states)}


def snapshot_files(directory: str) -> list[str]:
    return sorted(glob.glob(os.path.join(directory, "snap_*.npz")))


# ----------------------------------------------------------------------
# Courant report and convergence study

def courant_report(mesh: Mesh, cfg: ModelConfig, masks: LayerMasks,
                   dt: float | None = None) -> dict:
    """Reference time step dt_C = 1 / |A0| at the rest configuration and
    the Courant number of a given dt."""
    op = ReferenceOperator(mesh, masks, cfg,
                           rest_thickness(cfg.bathymetry, cfg.eta0))
    rad = op.spectral_radius()
    out = {"spectral_radius": rad, "dt_c": 1.0 / rad}
    if dt is not None:
        out["dt"] = dt
        out["courant"] = dt * rad
    return out


def mh_error(op: ReferenceOperator, state: LayeredState,
             reference: LayeredState) -> float:
    """Relative error in the linearized-energy norm at the rest reference."""
    d = op.layout.pack(state.h - reference.h, state.u - reference.u)
    r = op.layout.pack(reference.h, reference.u)
    return op.mh_norm(d) / op.mh_norm(r)


def integrate(advance, state: LayeredState, n_steps: int) -> LayeredState:
    for _ in range(n_steps):
        state = advance(state)
    return state


def convergence_study(problem: Problem, make_advance, dt_list,
                      horizon: float, ref_dt: float) -> list[dict]:
    """Errors against an RK4 reference trajectory at ref_dt.

    ``make_advance(dt)`` returns a one-step advance callable.  Each dt is
    snapped so that an integer number of steps lands exactly on the
    horizon.  Returns rows of (dt, courant, error) in the energy norm.
    """
    op = ReferenceOperator(problem.mesh, problem.masks, problem.cfg,
                           rest_thickness(problem.cfg.bathymetry,
                                          problem.cfg.eta0))
    rad = op.spectral_radius()

    n_ref = max(1, int(round(horizon / ref_dt)))
    ref = integrate(
        lambda s: rk4_step(problem.mesh, problem.masks, problem.cfg, s,
                           horizon / n_ref),
        problem.state0, n_ref)

    rows = []
    for dt in dt_list:
        n = max(1, int(round(horizon / dt)))
        dt_eff = horizon / n
        try:
            final = integrate(make_advance(dt_eff), problem.state0, n)
            err = mh_error(op, final, ref)
        except (ModelStateError, OutcroppingError, KrylovConvergenceError):
            err = float("nan")
        rows.append({"dt": dt_eff, "courant": dt_eff * rad, "error": err})
    return rows
