"""Time integrators: RK4 baseline, exponential Euler, the two-stage ETD2
family, three-stage ETD3, and their barotropic (layer-reduced) variants.

ETD schemes are driven in residual form: with the affine expansion
F[V] = F[V_n] + A (V - V_n) + R_n[V], a stage at abscissa c_i reads

    v_i     = V_n + c_i dt phi_1(c_i dt A) F[V_n]
              + dt sum_{j=2}^{i-1} a_{ij}(dt A) R_n[v_j]
    V_{n+1} = V_n + dt phi_1(dt A) F[V_n]
              + dt sum_{j=2}^{S} b_j(dt A) R_n[v_j],

valid under the simplifying conditions sum_j a_ij = c_i phi_1(c_i .) and
sum_j b_j = phi_1.  Tableau entries are stored as phi-combinations so
they can also be evaluated at scalars for the tableau identity tests.

One Krylov basis is built per right-hand side (F[V_n] and one residual
per stage) and reused for every phi index and abscissa that touches it;
for the barotropic variants the bases live in the reduced space and the
complement is propagated explicitly via
phi_s(dt A_P) b = (1/s!) (I - P) b + Psi phi_s(dt A_hat) Psi_dag b.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from mlswe import model
from mlswe.krylov import KrylovPolicy, PhiCache, PhiTerm, phi_apply
from mlswe.linops import ReferenceOperator
from mlswe.mesh.core import Mesh
from mlswe.mesh.masks import LayerMasks, rest_thickness
from mlswe.reduction import LayerReduction
from mlswe.state import LayeredState, ModelConfig


# ----------------------------------------------------------------------
# schemes

@dataclasses.dataclass
class EtdScheme:
    """Butcher tableau of an explicit exponential RK method; a[(i, j)] and
    b[j] are phi-combinations (1-based indices, c[0] = c_1 = 0)."""

    name: str
    c: tuple
    a: dict
    b: dict

    @property
    def stages(self) -> int:
        return len(self.c)


def exponential_euler() -> EtdScheme:
    return EtdScheme(name="etd1", c=(0.0,), a={},
                     b={1: [PhiTerm(1.0, 1, 1.0)]})


def etd2(c2: float = 1.0) -> EtdScheme:
    """Two-stage second-order family; c2 = 1 is exponential Heun,
    c2 = 2/3 exponential Ralston."""
    if not 0.0 < c2 <= 1.0:
        raise ValueError("c2 must lie in (0, 1]")
    return EtdScheme(
        name=f"etd2(c2={c2:g})",
        c=(0.0, c2),
        a={(2, 1): [PhiTerm(c2, 1, c2)]},
        b={1: [PhiTerm(1.0, 1, 1.0), PhiTerm(-1.0 / c2, 2, 1.0)],
           2: [PhiTerm(1.0 / c2, 2, 1.0)]},
    )


def etd3(c2: float = 0.5, c3: float = 0.75) -> EtdScheme:
    """Three-stage third-order method; the tableau parameter is
    gamma = -(3 c3^2 - 2 c3) / (3 c2^2 - 2 c2), or 0 when c3 = 2/3."""
    if abs(c3 - 2.0 / 3.0) < 1e-12:
        gam = 0.0
    else:
        gam = -(3 * c3 ** 2 - 2 * c3) / (3 * c2 ** 2 - 2 * c2)
    denom = gam * c2 + c3
    a32 = [PhiTerm(gam * c2, 2, c2), PhiTerm(c3 ** 2 / c2, 2, c3)]
    a31 = [PhiTerm(c3, 1, c3)] + [PhiTerm(-t.coeff, t.s, t.scale) for t in a32]
    b2 = [PhiTerm(gam / denom, 2, 1.0)]
    b3 = [PhiTerm(1.0 / denom, 2, 1.0)]
    b1 = [PhiTerm(1.0, 1, 1.0)] \
        + [PhiTerm(-t.coeff, t.s, t.scale) for t in b2 + b3]
    return EtdScheme(
        name=f"etd3(c2={c2:g},c3={c3:g})",
        c=(0.0, c2, c3),
        a={(2, 1): [PhiTerm(c2, 1, c2)], (3, 1): a31, (3, 2): a32},
        b={1: b1, 2: b2, 3: b3},
    )


def etd3_tableau_gamma(c2: float, c3: float) -> float:
    return -(3 * c3 ** 2 - 2 * c3) / (3 * c2 ** 2 - 2 * c2)


# ----------------------------------------------------------------------
# RK4 baseline

def rk4_step(mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
             state: LayeredState, dt: float) -> LayeredState:
    """Classical explicit fourth-order Runge-Kutta step (stable for the
    linearized dynamics up to Courant number sqrt(8))."""
    k1 = model.tendency(mesh, masks, cfg, state)
    k2 = model.tendency(mesh, masks, cfg, state.axpy(0.5 * dt, k1), check=False)
    k3 = model.tendency(mesh, masks, cfg, state.axpy(0.5 * dt, k2), check=False)
    k4 = model.tendency(mesh, masks, cfg, state.axpy(dt, k3), check=False)
    h = state.h + (dt / 6.0) * (k1.h + 2 * k2.h + 2 * k3.h + k4.h)
    u = state.u + (dt / 6.0) * (k1.u + 2 * k2.u + 2 * k3.u + k4.u)
    return LayeredState(h, u)


# ----------------------------------------------------------------------
# reference policies and operator choices

REFERENCE_FIXED = "reference-fixed"
REFERENCE_UPDATED = "reference-updated"
BAROTROPIC = "barotropic"
BAROTROPIC_MASS = "barotropic-mass-conserving"

OPERATOR_CHOICES = (REFERENCE_FIXED, REFERENCE_UPDATED, BAROTROPIC,
                    BAROTROPIC_MASS)


def reference_heights(policy: str, cfg: ModelConfig,
                      state: LayeredState | None = None) -> np.ndarray:
    """'fixed': rest thicknesses from (b, eta0); 'updated': current h."""
    if policy == "fixed":
        return rest_thickness(cfg.bathymetry, cfg.eta0)
    if policy == "updated":
        if state is None:
            raise ValueError("updated reference policy needs the state")
        return state.h
    raise ValueError(f"unknown reference policy {policy!r}")


class _ProjectedPhiCache:
    """Phi-combination workspace for the projected operator A_P; reduced
    Krylov bases are shared per right-hand side, the complement of the
    projection is handled exactly."""

    def __init__(self, red: LayerReduction, policy: KrylovPolicy,
                 gamma=None, p: int = 2, reorth_every: int = 0):
        self.red = red
        self.policy = policy
        self.gamma = gamma
        self.p = p
        self.reorth_every = reorth_every
        self._bases = {}
        self._perp = {}

    def apply_combo(self, key: str, b: np.ndarray, combo, dt: float):
        if key not in self._perp:
            b_hat = self.red.restrict(b)
            self._perp[key] = (b_hat, b - self.red.prolong(b_hat))
        b_hat, b_perp = self._perp[key]
        out = np.zeros_like(b)
        for t in combo:
            red_phi, basis = phi_apply(
                self.red.reduced_apply, self.red.mhat_dot, t.s, dt, b_hat,
                self.policy, skew=True, scale=t.scale, gamma=self.gamma,
                p=self.p, reorth_every=self.reorth_every,
                basis=self._bases.get(key))
            self._bases[key] = basis
            out += t.coeff * (b_perp / math.factorial(t.s)
                              + self.red.prolong(red_phi))
        return out

    @property
    def max_m(self) -> int:
        return max((len(b.vectors) for b in self._bases.values()), default=0)


@dataclasses.dataclass
class StepStats:
    krylov_m: int = 0
    tendency_evals: int = 0


class EtdStepper:
    """Exponential integrator bound to a mesh/config and operator choice.

    ``operator`` selects the linearization: the full reference wave
    operator (frozen rest reference or re-linearized at the current
    heights every step) or its barotropic reduction (standard or
    total-mass-conserving).  Forcing terms ride in the residual, never in
    the linear operator.
    """

    def __init__(self, mesh: Mesh, masks: LayerMasks, cfg: ModelConfig,
                 scheme: EtdScheme, operator: str = REFERENCE_FIXED,
                 krylov: KrylovPolicy | None = None,
                 gamma: float | None = None, p: int = 2,
                 reorth_every: int = 0):
        if operator not in OPERATOR_CHOICES:
            raise ValueError(f"operator must be one of {OPERATOR_CHOICES}")
        self.mesh = mesh
        self.masks = masks
        self.cfg = cfg
        self.scheme = scheme
        self.operator = operator
        self.gamma = gamma
        self.p = p
        self.reorth_every = reorth_every

        h_rest = rest_thickness(cfg.bathymetry, cfg.eta0)
        self.op0 = ReferenceOperator(mesh, masks, cfg, h_rest)
        self.layout = self.op0.layout
        self.reduction = None
        if operator in (BAROTROPIC, BAROTROPIC_MASS):
            kind = "barotropic" if operator == BAROTROPIC else "mass-conserving"
            self.reduction = LayerReduction(self.op0, kind=kind)
        self.krylov = krylov  # None -> sized per step from the Courant number

    def courant(self, dt: float) -> float:
        return dt * self.op0.spectral_radius()

    def _policy(self, dt: float) -> KrylovPolicy:
        if self.krylov is not None:
            return self.krylov
        return KrylovPolicy.fixed_for_courant(self.courant(dt))

    def _tendency_flat(self, vec: np.ndarray, check: bool) -> np.ndarray:
        st = self.layout.to_state(vec)
        out = model.tendency(self.mesh, self.masks, self.cfg, st, check=check)
        return self.layout.pack(out.h, out.u)

    def step(self, state: LayeredState, dt: float,
             stats: StepStats | None = None) -> LayeredState:
        policy = self._policy(dt)
        if self.operator == REFERENCE_UPDATED:
            op = ReferenceOperator(self.mesh, self.masks, self.cfg,
                                   reference_heights("updated", self.cfg, state))
        else:
            op = self.op0

        if self.reduction is not None:
            cache = _ProjectedPhiCache(self.reduction, policy, self.gamma,
                                       self.p, self.reorth_every)
            a_apply = self.reduction.projected_apply
        else:
            cache = PhiCache(op.apply, op.mh_dot, policy, skew=True,
                             gamma=self.gamma, p=self.p,
                             reorth_every=self.reorth_every)
            a_apply = op.apply

        v_n = self.layout.pack(state.h, state.u)
        f_n = self._tendency_flat(v_n, check=True)
        n_tend = 1

        residuals = {}
        scheme = self.scheme
        for i in range(2, scheme.stages + 1):
            c_i = scheme.c[i - 1]
            acc = v_n + dt * cache.apply_combo(
                "F", f_n, [PhiTerm(c_i, 1, c_i)], dt)
            for j in range(2, i):
                acc = acc + dt * cache.apply_combo(
                    f"R{j}", residuals[j], scheme.a[(i, j)], dt)
            f_i = self._tendency_flat(acc, check=False)
            n_tend += 1
            residuals[i] = f_i - f_n - a_apply(acc - v_n)

        out = v_n + dt * cache.apply_combo("F", f_n, [PhiTerm(1.0, 1, 1.0)], dt)
        for j in range(2, scheme.stages + 1):
            out = out + dt * cache.apply_combo(
                f"R{j}", residuals[j], scheme.b[j], dt)

        if stats is not None:
            stats.krylov_m = max(stats.krylov_m, cache.max_m)
            stats.tendency_evals += n_tend
        return self.layout.to_state(out)


# -- one-shot wrappers ---------------------------------------------------

def etd_euler_step(mesh, masks, cfg, state, dt, operator=REFERENCE_FIXED,
                   **kw) -> LayeredState:
    return EtdStepper(mesh, masks, cfg, exponential_euler(),
                      operator=operator, **kw).step(state, dt)


def etd2_step(mesh, masks, cfg, state, dt, c2=1.0,
              operator=REFERENCE_FIXED, **kw) -> LayeredState:
    return EtdStepper(mesh, masks, cfg, etd2(c2), operator=operator,
                      **kw).step(state, dt)


def etd3_step(mesh, masks, cfg, state, dt, c2=0.5, c3=0.75,
              operator=REFERENCE_FIXED, **kw) -> LayeredState:
    return EtdStepper(mesh, masks, cfg, etd3(c2, c3), operator=operator,
                      **kw).step(state, dt)


def betd_step(mesh, masks, cfg, state, dt, scheme=None,
              mass_conserving=False, **kw) -> LayeredState:
    op = BAROTROPIC_MASS if mass_conserving else BAROTROPIC
    return EtdStepper(mesh, masks, cfg, scheme or exponential_euler(),
                      operator=op, **kw).step(state, dt)


# ----------------------------------------------------------------------
# empirical stability probe

def run_is_stable(step_fn, state0: LayeredState, n_steps: int,
                  energy_fn, blowup_factor: float = 10.0) -> bool:
    """Advance n_steps and report whether the energy stayed finite and
    below ``blowup_factor`` times its initial value."""
    e0 = abs(energy_fn(state0)) + 1e-300
    st = state0
    try:
        for _ in range(n_steps):
            st = step_fn(st)
            e = energy_fn(st)
            if not np.isfinite(e) or abs(e) > blowup_factor * e0:
                return False
    except (FloatingPointError, OverflowError):
        return False
    except Exception as exc:  # instability surfacing as model errors
        if type(exc).__name__ in ("OutcroppingError", "ModelStateError",
                                  "KrylovConvergenceError"):
            return False
        raise
    return True


def max_stable_dt(make_step_fn, state0, n_steps, energy_fn,
                  dt_lo: float, dt_hi: float, bisections: int = 6) -> float:
    """Bisect for the largest dt (within [dt_lo, dt_hi]) for which
    ``run_is_stable`` holds; dt_lo is assumed stable."""
    if not run_is_stable(make_step_fn(dt_lo), state0, n_steps, energy_fn):
        raise ValueError("dt_lo is not stable; cannot bracket")
    lo, hi = dt_lo, dt_hi
    if run_is_stable(make_step_fn(hi), state0, n_steps, energy_fn):
        return hi
    for _ in range(bisections):
        mid = 0.5 * (lo + hi)
        if run_is_stable(make_step_fn(mid), state0, n_steps, energy_fn):
            lo = mid
        else:
            hi = mid
    return lo
