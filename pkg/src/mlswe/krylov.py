"""Weighted-inner-product Krylov evaluation of matrix phi-functions.

phi_s(z) = sum_k z^k / (k+s)!, phi_0 = exp.  For a linear operator A and
vector b, the approximation after M steps of the (weighted) Arnoldi or
skew-Lanczos process with basis V_M and Hessenberg H_M is

    phi_s(dt A) b  ~=  ||b||  V_M  phi_s(dt H_M) e_1.

For operators skew-symmetric in the chosen inner product the Hessenberg
matrix is tridiagonal with zero diagonal, the recurrence needs a single
inner product per step (O(M) total versus Arnoldi's O(M^2)), and the
small phi-function is evaluated through an eigendecomposition of the
equivalent symmetric tridiagonal matrix.  The general path evaluates
phi_s(Z) e_1 as a block of the exponential of an augmented matrix.

Artificial spectral dissipation replaces phi_s(c z) by
phi_s(c (z - (-z^2/gamma^2)^p)); only the small dense function changes,
the Krylov basis is reused unchanged.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import scipy.linalg


class KrylovConvergenceError(Exception):
    """Adaptive policy hit m_max; carries the last residual estimate."""

    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


# ----------------------------------------------------------------------
# scalar phi functions (complex, vectorized)

_SERIES_TERMS = 24
_SERIES_RADIUS = 0.5


def phi_scalar(z, s: int):
    """phi_s evaluated at complex argument(s); series for small |z|,
    downward use of the recurrence phi_{j+1} = (phi_j - 1/j!)/z otherwise."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_RADIUS

    if small.any():
        zs = z[small]
        acc = np.zeros_like(zs)
        for k in range(_SERIES_TERMS, -1, -1):
            acc = acc * zs + 1.0 / math.factorial(k + s)
        out[small] = acc

    big = ~small
    if big.any():
        zb = z[big]
        val = np.exp(zb)
        for j in range(s):
            val = (val - 1.0 / math.factorial(j)) / zb
        out[big] = val
    return out


def phi_e1_general(H: np.ndarray, s: int, dt: float, scale: float = 1.0,
                   gamma: float | None = None, p: int = 2) -> np.ndarray:
    """phi_s(scale * (dt H - damping)) e_1 for a small dense H via the
    exponential of an augmented matrix (nilpotent chain for s >= 1).
    The spectral damping (-(dt H)^2/gamma^2)^p applies to the
    dimensionless dt H before the stage constant ``scale``."""
    Z = dt * np.asarray(H, dtype=float)
    if gamma is not None:
        Z = Z - np.linalg.matrix_power(-Z @ Z / gamma ** 2, p)
    Z = scale * Z
    m = Z.shape[0]
    if s == 0:
        return scipy.linalg.expm(Z)[:, 0]
    aug = np.zeros((m + s, m + s))
    aug[:m, :m] = Z
    aug[0, m] = 1.0
    for j in range(s - 1):
        aug[m + j, m + j + 1] = 1.0
    return scipy.linalg.expm(aug)[:m, m + s - 1]


def _phi_modified(z, s, scale, gamma, p):
    """phi_s(scale * (z - (-z^2/gamma^2)^p)) at complex z (= dt * eigenvalue)."""
    if gamma is not None:
        z = z - (-(z * z) / gamma ** 2) ** p
    return phi_scalar(scale * z, s)


def phi_e1_skew_tridiag(betas: np.ndarray, s: int, dt: float,
                        scale: float = 1.0, gamma: float | None = None,
                        p: int = 2) -> np.ndarray:
    """phi_s(scale * (dt H - damping)) e_1 for skew-tridiagonal H with zero
    diagonal and positive subdiagonal ``betas`` (H[j+1,j] = betas[j]).

    Diagonalized through the unitarily equivalent symmetric tridiagonal
    matrix: H = D (-i S) D^-1 with D = diag(i^k), S symmetric tridiagonal
    with offdiagonal ``betas``.
    """
    m = len(betas) + 1
    if m == 1:
        z = np.array([0.0 + 0.0j])
        return np.array([_phi_modified(z, s, scale, gamma, p)[0].real])
    lam, Q = scipy.linalg.eigh_tridiagonal(np.zeros(m), np.asarray(betas))
    f = _phi_modified(-1j * dt * lam, s, scale, gamma, p)
    D = 1j ** np.arange(m)
    vec = D * (Q @ (f * Q[0, :]))
    return vec.real


# ----------------------------------------------------------------------
# basis construction

_BREAKDOWN_REL = 1e-13


@dataclasses.dataclass
class KrylovPolicy:
    """Sizing policy for the Krylov space.

    ``fixed`` uses exactly ``m`` vectors.  ``adaptive`` grows the basis
    until the generalized residual  h_{M+1,M} |e_M^T phi_s(dt H_M) e_1|
    drops below ``tol`` (relative to ||b||); checks start at iteration
    ``check_from`` (typically the Courant number) and a failure to
    converge by ``m_max`` raises KrylovConvergenceError.
    """

    kind: str = "fixed"
    m: int = 30
    tol: float = 1e-6
    m_max: int = 500
    check_from: int = 2

    @staticmethod
    def fixed_for_courant(courant: float) -> "KrylovPolicy":
        return KrylovPolicy(kind="fixed", m=max(2, round(1.3 * courant + 15)))

    @staticmethod
    def adaptive(tol: float = 1e-6, courant: float = 0.0,
                 m_max: int = 500) -> "KrylovPolicy":
        return KrylovPolicy(kind="adaptive", tol=tol, m_max=m_max,
                            check_from=max(2, math.ceil(courant)))


class KrylovBasis:
    """Incrementally built (weighted) Arnoldi or skew-Lanczos basis.

    ``vectors[j]`` are orthonormal in the supplied inner product; for the
    skew path the Hessenberg data is the positive subdiagonal ``betas``.
    Extending the basis leaves previously computed columns untouched.
    """

    def __init__(self, apply_a, inner, b, skew=True, reorth_every: int = 0):
        self.apply_a = apply_a
        self.inner = inner
        self.skew = skew
        self.reorth_every = reorth_every
        self.inner_count = 0
        self.matvec_count = 0
        self.breakdown = False

        self.beta0 = self._norm(b)
        self.vectors: list[np.ndarray] = []
        self.betas: list[float] = []
        self._h_cols: list[np.ndarray] = []   # Arnoldi columns (grown)
        if self.beta0 > 0.0:
            self.vectors.append(b / self.beta0)

    def _dot(self, x, y):
        self.inner_count += 1
        return self.inner(x, y)

    def _norm(self, x):
        return np.sqrt(max(self._dot(x, x), 0.0))

    def h_next(self, m: int) -> float:
        """Extension scalar h_{m+1,m}; zero after a breakdown at m."""
        if self.skew:
            return self.betas[m - 1] if m - 1 < len(self.betas) else 0.0
        col = self._h_cols[m - 1]
        return col[m]

    def extend_to(self, m_target: int) -> int:
        """Run the recurrence up to m_target steps; returns the usable
        basis size (smaller only on breakdown = exact invariant subspace)."""
        while not self.breakdown and self._steps() < m_target:
            if self.skew:
                self._lanczos_step()
            else:
                self._arnoldi_step()
            self.matvec_count += 1
        return min(m_target, len(self.vectors))

    def _steps(self):
        return len(self.betas) if self.skew else len(self._h_cols)

    def _lanczos_step(self):
        j = len(self.betas)
        w = self.apply_a(self.vectors[j])
        if j >= 1:
            w = w + self.betas[j - 1] * self.vectors[j - 1]
        if self.reorth_every and (j + 1) % self.reorth_every == 0:
            for v in self.vectors:
                w = w - self._dot(v, w) * v
        scale = max(self.betas[-1] if self.betas else self.beta0, self.beta0)
        nb = self._norm(w)
        if nb <= _BREAKDOWN_REL * scale:
            self.breakdown = True
            return
        self.betas.append(nb)
        self.vectors.append(w / nb)

    def _arnoldi_step(self):
        j = len(self._h_cols)
        w = self.apply_a(self.vectors[j])
        col = np.zeros(j + 2)
        for i, v in enumerate(self.vectors):
            col[i] = self._dot(v, w)
            w = w - col[i] * v
        if self.reorth_every:
            for i, v in enumerate(self.vectors):
                c = self._dot(v, w)
                col[i] += c
                w = w - c * v
        nb = self._norm(w)
        scale = max(np.abs(col).max(), self.beta0)
        if nb <= _BREAKDOWN_REL * scale:
            self.breakdown = True
            col[j + 1] = 0.0
            self._h_cols.append(col)
            return
        col[j + 1] = nb
        self._h_cols.append(col)
        self.vectors.append(w / nb)

    def hessenberg(self, m: int) -> np.ndarray:
        """Dense H_m (m x m)."""
        H = np.zeros((m, m))
        if self.skew:
            for j in range(m - 1):
                H[j + 1, j] = self.betas[j]
                H[j, j + 1] = -self.betas[j]
        else:
            for j in range(m):
                col = self._h_cols[j]
                H[:min(j + 2, m), j] = col[:min(j + 2, m)]
        return H

    def phi_e1(self, m: int, s: int, dt: float, scale: float = 1.0,
               gamma: float | None = None, p: int = 2) -> np.ndarray:
        if self.skew:
            return phi_e1_skew_tridiag(np.asarray(self.betas[:m - 1]), s,
                                       dt, scale, gamma, p)
        return phi_e1_general(self.hessenberg(m), s, dt, scale, gamma, p)

    def combine(self, small: np.ndarray) -> np.ndarray:
        """beta0 * V_m @ small."""
        out = self.beta0 * small[0] * self.vectors[0]
        for c, v in zip(small[1:], self.vectors[1:]):
            if c != 0.0:
                out += self.beta0 * c * v
        return out

    def orthogonality_defect(self) -> float:
        """Max off-identity entry of V^T M V (diagnostic)."""
        m = len(self.vectors)
        G = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                G[i, j] = G[j, i] = self.inner(self.vectors[i], self.vectors[j])
        return np.abs(G - np.eye(m)).max()


def _converged_m(basis: KrylovBasis, policy: KrylovPolicy, s: int,
                 scale: float, dt: float, gamma, p) -> int:
    """Grow the basis adaptively; return the basis size to use.

    The generalized residual uses the subdiagonal of the dt-scaled
    Hessenberg: r = |scale dt h_{M+1,M}| |e_M^T phi_s(scale dt H_M) e_1|
    (relative to ||b||, which divides out).
    """
    m = max(2, policy.check_from)
    while True:
        usable = basis.extend_to(m)
        small = basis.phi_e1(usable, s, dt, scale, gamma, p)
        resid = abs(basis.h_next(usable) * scale * dt * small[-1])
        if resid <= policy.tol or (basis.breakdown and usable == len(basis.vectors)):
            return usable
        if usable >= policy.m_max:
            raise KrylovConvergenceError(
                f"Krylov residual {resid:.3e} above tol {policy.tol:.3e} "
                f"at m_max={policy.m_max}", resid)
        m = usable + 1


def phi_apply(apply_a, inner, s: int, dt: float, b: np.ndarray,
              policy: KrylovPolicy, skew: bool = True, scale: float = 1.0,
              gamma: float | None = None, p: int = 2,
              reorth_every: int = 0, basis: KrylovBasis | None = None):
    """Approximate phi_s(scale * dt * A) b in the given inner product.

    Returns (result, basis); pass the basis back in to reuse or extend it
    for further phi indices or scales with the same A and b.
    """
    if basis is None:
        basis = KrylovBasis(apply_a, inner, b, skew=skew,
                            reorth_every=reorth_every)
    if basis.beta0 == 0.0:
        return np.zeros_like(b), basis

    if policy.kind == "fixed":
        m = basis.extend_to(policy.m)
    else:
        m = _converged_m(basis, policy, s, scale, dt, gamma, p)
    small = basis.phi_e1(m, s, dt, scale, gamma, p)
    return basis.combine(small), basis


@dataclasses.dataclass
class PhiTerm:
    """coeff * phi_s(scale * dt * A) as one term of a tableau entry."""
    coeff: float
    s: int
    scale: float = 1.0


Combo = list  # list[PhiTerm]


def combo_scalar(combo, z, gamma=None, p=2) -> complex:
    """Evaluate a phi-combination at a scalar argument (tableau tests)."""
    acc = 0.0 + 0.0j
    for t in combo:
        acc += t.coeff * _phi_modified(
            np.asarray([z], dtype=complex), t.s, t.scale, gamma, p)[0]
    return acc


class PhiCache:
    """Per-step workspace: one Krylov basis per right-hand side, reused
    across stages, phi indices and abscissae; only the small dense
    phi-function is recomputed."""

    def __init__(self, apply_a, inner, policy: KrylovPolicy, skew=True,
                 gamma: float | None = None, p: int = 2,
                 reorth_every: int = 0):
        self.apply_a = apply_a
        self.inner = inner
        self.policy = policy
        self.skew = skew
        self.gamma = gamma
        self.p = p
        self.reorth_every = reorth_every
        self._bases: dict[str, KrylovBasis] = {}
        self.sweeps = 0

    def basis_for(self, key: str, b: np.ndarray) -> KrylovBasis:
        if key not in self._bases:
            self._bases[key] = KrylovBasis(self.apply_a, self.inner, b,
                                           skew=self.skew,
                                           reorth_every=self.reorth_every)
            self.sweeps += 1
        return self._bases[key]

    def apply_combo(self, key: str, b: np.ndarray, combo, dt: float):
        """sum_t coeff_t phi_{s_t}(scale_t dt A) b with one shared basis."""
        basis = self.basis_for(key, b)
        if basis.beta0 == 0.0:
            return np.zeros_like(b)
        small_total = None
        for t in combo:
            if self.policy.kind == "fixed":
                m = basis.extend_to(self.policy.m)
            else:
                m = _converged_m(basis, self.policy, t.s, t.scale, dt,
                                 self.gamma, self.p)
            small = t.coeff * basis.phi_e1(m, t.s, dt, t.scale,
                                           self.gamma, self.p)
            if small_total is None:
                small_total = small
            elif len(small) > len(small_total):
                small[:len(small_total)] += small_total
                small_total = small
            else:
                small_total[:len(small)] += small
        return basis.combine(small_total)

    @property
    def max_m(self) -> int:
        return max((len(b.vectors) for b in self._bases.values()), default=0)

    @property
    def inner_count(self) -> int:
        return sum(b.inner_count for b in self._bases.values())

    @property
    def matvec_count(self) -> int:
        return sum(b.matvec_count for b in self._bases.values())
