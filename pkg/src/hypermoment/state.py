"""Moment states, conserved raw moments, and collision-target coefficients.

The state vector w packs, in rank order: density (rank 1), the D mean
velocities, the pressure entries p_ij stored as p_ij/(1+delta_ij) at the
rank of e_i+e_j, and the free expansion coefficients f_alpha for
3 <= |alpha| <= M. Coefficients of order 1 and 2 vanish identically
(they are absorbed into u and the scale tensor), order 0 equals density.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .hermite import AnisotropicBasis
from .index import (
    IndexSet,
    factorial,
    is_void,
    order,
    sub,
    unit,
)

_SPD_TOL = 1e-12


class AdmissibilityError(ValueError):
    """Raised when a state (or implied state) has rho <= 0 or a scale tensor
    that is not positive definite. Carries the offending eigenvalue."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


def _check_spd(T: np.ndarray, what: str):
    T = np.asarray(T, dtype=float)
    if not np.allclose(T, T.T, rtol=1e-10, atol=1e-12):
        raise AdmissibilityError(f"{what} must be symmetric")
    eigs = np.linalg.eigvalsh(T)
    tol = _SPD_TOL * max(np.trace(T), 1e-300)
    if eigs[0] <= tol:
        raise AdmissibilityError(
            f"{what} is not positive definite (min eigenvalue {eigs[0]:.3e})",
            eigenvalue=float(eigs[0]),
        )


@dataclass(frozen=True)
class MomentState:
    """Immutable moment state of dimension D and order M."""

    D: int
    M: int
    rho: float
    u: np.ndarray
    p: np.ndarray
    f: Mapping[tuple, float]

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(self.D)
        p = np.asarray(self.p, dtype=float).reshape(self.D, self.D)
        u.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", p)
        f = {}
        for alpha, val in dict(self.f).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.D or is_void(alpha):
                raise ValueError(f"bad coefficient index {alpha}")
            k = order(alpha)
            if k < 3 or k > self.M:
                raise ValueError(
                    f"free coefficients live at orders 3..{self.M}, got {alpha}"
                )
            if val != 0.0:
                f[alpha] = float(val)
        object.__setattr__(self, "f", f)
        self.validate()

    def validate(self):
        if self.rho <= 0:
            raise AdmissibilityError(f"density must be positive, got {self.rho}")
        _check_spd(self.p, "pressure tensor")

    # -- derived quantities ------------------------------------------------

    @cached_property
    def index_set(self) -> IndexSet:
        return IndexSet(self.D, self.M)

    @cached_property
    def theta_tensor(self) -> np.ndarray:
        T = self.p / self.rho
        T.setflags(write=False)
        return T

    @property
    def theta(self) -> float:
        """Mean scalar temperature: trace(p) / (D rho)."""
        return float(np.trace(self.p) / (self.D * self.rho))

    @cached_property
    def basis(self) -> AnisotropicBasis:
        return AnisotropicBasis(self.theta_tensor)

    def f_value(self, alpha) -> float:
        """Expansion coefficient with the constraints resolved.

        Void indices give 0, order 0 gives density, orders 1 and 2 give 0,
        anything above order M gives 0 (closure).
        """
        alpha = tuple(alpha)
        if is_void(alpha):
            return 0.0
        k = order(alpha)
        if k == 0:
            return self.rho
        if k in (1, 2):
            return 0.0
        if k > self.M:
            return 0.0
        return self.f.get(alpha, 0.0)

    # -- packed vector form --------------------------------------------------

    @cached_property
    def w(self) -> np.ndarray:
        s = self.index_set
        w = np.zeros(s.N)
        w[0] = self.rho
        D = self.D
        for i in range(D):
            w[s.rank0(unit(D, i + 1))] = self.u[i]
        for i in range(D):
            for j in range(i, D):
                slot = s.rank0(tuple(unit(D, i + 1)[k] + unit(D, j + 1)[k] for k in range(D)))
                w[slot] = self.p[i, j] / (1 + (i == j))
        for alpha, val in self.f.items():
            w[s.rank0(alpha)] = val
        w.setflags(write=False)
        return w

    @classmethod
    def from_w(cls, D: int, M: int, w: Sequence[float]) -> "MomentState":
        s = IndexSet(D, M)
        w = np.asarray(w, dtype=float)
        if w.shape != (s.N,):
            raise ValueError(f"state vector must have length {s.N}, got {w.shape}")
        rho = float(w[0])
        u = np.array([w[s.rank0(unit(D, i + 1))] for i in range(D)])
        p = np.zeros((D, D))
        for i in range(D):
            for j in range(i, D):
                ij = tuple(unit(D, i + 1)[k] + unit(D, j + 1)[k] for k in range(D))
                p[i, j] = p[j, i] = w[s.rank0(ij)] * (1 + (i == j))
        f = {}
        for alpha in s.indices:
            if order(alpha) >= 3:
                f[alpha] = float(w[s.rank0(alpha)])
        return cls(D=D, M=M, rho=rho, u=u, p=p, f=f)

    def replace(self, **kw) -> "MomentState":
        cur = dict(D=self.D, M=self.M, rho=self.rho, u=self.u, p=self.p, f=self.f)
        cur.update(kw)
        return MomentState(**cur)


def equilibrium(D: int, M: int, rho: float, u, Theta) -> MomentState:
    """State whose free coefficients all vanish (local Gaussian)."""
    Theta = np.asarray(Theta, dtype=float).reshape(D, D)
    _check_spd(Theta, "scale tensor")
    if rho <= 0:
        raise AdmissibilityError(f"density must be positive, got {rho}")
    return MomentState(D=D, M=M, rho=rho, u=u, p=rho * Theta, f={})


def heat_flux(state: MomentState) -> np.ndarray:
    """q_i = 2 f_{3 e_i} + sum_d f_{e_i + 2 e_d}."""
    if state.M < 3:
        raise ValueError(f"heat flux needs order M >= 3, got M={state.M}")
    D = state.D
    q = np.zeros(D)
    for i in range(D):
        ei = unit(D, i + 1)
        q[i] = 2.0 * state.f_value(tuple(3 * e for e in ei))
        for d in range(D):
            ed = unit(D, d + 1)
            q[i] += state.f_value(tuple(a + 2 * b for a, b in zip(ei, ed)))
    return q


# -- conversion machinery ----------------------------------------------------


def moment_table(Theta: np.ndarray, set_: IndexSet) -> np.ndarray:
    """Table of raw moments of the weighted basis functions.

    Entry [a, b] is the integral of x^beta against the function of index
    alpha (a, b the 0-based ranks), for the centered weight with scale
    tensor Theta. Fully determined by the raising recurrence seeded from
    the normalized weight; vanishes for |alpha| > |beta| and between
    different orders of equal parity violation.
    """
    Theta = np.asarray(Theta, dtype=float)
    D, M, N = set_.D, set_.M, set_.N
    idx = set_.indices
    rank = {a: k for k, a in enumerate(idx)}
    m = np.zeros((N, N))
    m[0, 0] = 1.0
    for b_rank, beta in enumerate(idx):
        if beta == (0,) * D:
            continue
        d = next(j for j, t in enumerate(beta) if t > 0)
        base = sub(beta, unit(D, d + 1))
        bb = rank[base]
        for a_rank, alpha in enumerate(idx):
            if order(alpha) > order(beta):
                continue
            acc = 0.0
            for j in range(D):
                up = tuple(a + (1 if k == j else 0) for k, a in enumerate(alpha))
                r = rank.get(up)
                if r is not None:
                    acc += Theta[d, j] * m[r, bb]
            if alpha[d] > 0:
                down = sub(alpha, unit(D, d + 1))
                acc += alpha[d] * m[rank[down], bb]
            m[a_rank, b_rank] = acc
    return m


def _shifted_coeff_table(set_: IndexSet, u: np.ndarray, m: np.ndarray) -> np.ndarray:
    """c[a, b] = integral of xi^beta against the alpha basis function
    centered at u: binomial expansion of (x+u)^beta over the centered table."""
    D, N = set_.D, set_.N
    idx = set_.indices
    rank = {a: k for k, a in enumerate(idx)}
    c = np.zeros((N, N))
    for b_rank, beta in enumerate(idx):
        for gamma in _sub_indices(beta):
            g_rank = rank[gamma]
            coef = 1.0
            for d in range(D):
                coef *= math.comb(beta[d], gamma[d]) * u[d] ** (beta[d] - gamma[d])
            if coef != 0.0:
                c[:, b_rank] += coef * m[:, g_rank]
    return c


def _sub_indices(beta):
    """All gamma with 0 <= gamma <= beta componentwise."""
    if len(beta) == 1:
        return [(g,) for g in range(beta[0] + 1)]
    tails = _sub_indices(beta[1:])
    return [(g,) + t for g in range(beta[0] + 1) for t in tails]


@dataclass(frozen=True)
class ConservedMoments:
    """Raw velocity moments F_alpha = (1/alpha!) integral xi^alpha f dxi."""

    D: int
    M: int
    F: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    @cached_property
    def index_set(self) -> IndexSet:
        return IndexSet(self.D, self.M)

    def value(self, alpha) -> float:
        return float(self.F[self.index_set.rank0(alpha)])


def to_conserved(state: MomentState) -> ConservedMoments:
    """Raw moments of the expansion, via the shifted moment table."""
    s = state.index_set
    m = moment_table(state.theta_tensor, s)
    c = _shifted_coeff_table(s, state.u, m)
    fvec = np.array([state.f_value(a) for a in s.indices])
    F = (fvec @ c) / np.array([factorial(a) for a in s.indices], dtype=float)
    return ConservedMoments(D=state.D, M=state.M, F=F)


def from_conserved(F: ConservedMoments | Sequence[float], D: int = None, M: int = None) -> MomentState:
    """Invert to_conserved. Raises AdmissibilityError when the implied
    density or scale tensor is out of range."""
    if isinstance(F, ConservedMoments):
        D, M, Fv = F.D, F.M, F.F
    else:
        Fv = np.asarray(F, dtype=float)
    s = IndexSet(D, M)
    if Fv.shape != (s.N,):
        raise ValueError(f"moment vector must have length {s.N}")
    idx = s.indices
    rank = {a: k for k, a in enumerate(idx)}
    rho = float(Fv[0])
    if rho <= 0:
        raise AdmissibilityError(f"implied density {rho} is not positive")
    u = np.array([Fv[rank[unit(D, i + 1)]] for i in range(D)]) / rho
    p = np.zeros((D, D))
    for i in range(D):
        for j in range(i, D):
            ij = tuple(unit(D, i + 1)[k] + unit(D, j + 1)[k] for k in range(D))
            val = (1 + (i == j)) * Fv[rank[ij]] - u[i] * u[j] * rho
            p[i, j] = p[j, i] = val
    _check_spd(p / rho, "implied scale tensor")
    m = moment_table(p / rho, s)
    c = _shifted_coeff_table(s, u, m)
    f = {}
    fvec = np.zeros(s.N)
    fvec[0] = rho
    for b_rank, beta in enumerate(idx):
        k = order(beta)
        if k < 3:
            continue
        residual = factorial(beta) * Fv[b_rank]
        residual -= float(fvec @ c[:, b_rank]) - fvec[b_rank] * c[b_rank, b_rank]
        val = residual / factorial(beta)
        fvec[b_rank] = val
        if val != 0.0:
            f[beta] = val
    return MomentState(D=D, M=M, rho=rho, u=u, p=p, f=f)


# -- collision targets ---------------------------------------------------------


@dataclass(frozen=True)
class CollisionModel:
    """Relaxation model: frequency nu and Prandtl number.

    kind "bgk" forces Pr = 1; kind "es-bgk" admits Pr with
    b = 1 - 1/Pr in [-1/2, 1].
    """

    nu: float = 1.0
    kind: str = "bgk"
    Pr: float = 1.0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError(f"collision frequency must be >= 0, got {self.nu}")
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("bgk", "es-bgk"):
            raise ValueError(f"unknown collision kind {self.kind!r}")
        if kind == "bgk" and not math.isclose(self.Pr, 1.0):
            raise ValueError("bgk model has Prandtl number 1")
        if not -0.5 <= self.b <= 1.0:
            raise ValueError(
                f"Prandtl number {self.Pr} puts the anisotropy weight {self.b} outside [-1/2, 1]"
            )

    @property
    def b(self) -> float:
        return 1.0 - 1.0 / self.Pr


def gaussian_raw_moments(Lambda: np.ndarray, set_: IndexSet) -> np.ndarray:
    """Centered Gaussian moments mu_beta for covariance Lambda, all |beta| <= M.

    mu_{beta+e_d} = sum_j Lambda[d,j] beta_j mu_{beta-e_j}; odd orders are
    exactly zero.
    """
    D = set_.D
    idx = set_.indices
    rank = {a: k for k, a in enumerate(idx)}
    mu = np.zeros(set_.N)
    mu[0] = 1.0
    for b_rank, beta in enumerate(idx):
        if beta == (0,) * D:
            continue
        d = next(j for j, t in enumerate(beta) if t > 0)
        base = sub(beta, unit(D, d + 1))
        acc = 0.0
        for j in range(D):
            if base[j] == 0:
                continue
            down = sub(base, unit(D, j + 1))
            acc += Lambda[d, j] * base[j] * mu[rank[down]]
        mu[b_rank] = acc
    return mu


def collision_target_covariance(state: MomentState, model: CollisionModel) -> np.ndarray:
    """Covariance of the relaxation target Gaussian."""
    b = model.b
    Lam = b * state.theta_tensor + (1.0 - b) * state.theta * np.eye(state.D)
    _check_spd(Lam, "collision target covariance")
    return Lam


def collision_coeffs(state: MomentState, model: CollisionModel) -> np.ndarray:
    """Expansion coefficients of the relaxation target in the state's basis.

    Length-N vector in rank order: density at order 0, zeros at odd orders,
    (1-b)(p delta_ij - p_ij)/(1+delta_ij) at order 2, higher even orders
    from the Gaussian moment solve.
    """
    s = state.index_set
    Lam = collision_target_covariance(state, model)
    mu = gaussian_raw_moments(Lam, s)
    m = moment_table(state.theta_tensor, s)
    idx = s.indices
    G = np.zeros(s.N)
    for b_rank, beta in enumerate(idx):
        residual = state.rho * mu[b_rank]
        residual -= float(G @ m[:, b_rank]) - G[b_rank] * m[b_rank, b_rank]
        G[b_rank] = residual / factorial(beta)
    return G


# -- JSON form ---------------------------------------------------------------


def state_to_json(state: MomentState) -> str:
    f = {",".join(map(str, a)): v for a, v in sorted(state.f.items())}
    doc = {
        "D": state.D,
        "M": state.M,
        "rho": state.rho,
        "u": state.u.tolist(),
        "p": state.p.tolist(),
        "f": f,
    }
    return json.dumps(doc, indent=2)


def state_from_json(text: str) -> MomentState:
    doc = json.loads(text)
    try:
        D = int(doc["D"])
        M = int(doc["M"])
        rho = float(doc["rho"])
        u = doc["u"]
        p = doc["p"]
    except KeyError as e:
        raise ValueError(f"state JSON missing field {e.args[0]!r}") from None
    f = {}
    for key, val in doc.get("f", {}).items():
        alpha = tuple(int(t) for t in key.split(","))
        f[alpha] = float(val)
    return MomentState(D=D, M=M, rho=rho, u=u, p=p, f=f)
