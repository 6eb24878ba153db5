"""Characteristic fields and elementary waves for the first-axis Riemann
problem of the regularized moment system.

Fields are labeled by the unit-variance Hermite root C with wave speed
u1 + C sqrt(theta_11). Fields from the top family are genuinely nonlinear
(except C = 0); all others are linearly degenerate. Rarefaction curves have
closed forms in (rho, u1, p11); shocks satisfy a generalized jump condition
whose top-order rows depend on a path, taken linear in conserved moments.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .assembly import regularization_correction
from .hermite import he_roots
from .index import order, unit
from .spectral import block_eigenvector, prolong, spectrum_regularized
from .state import ConservedMoments, MomentState, from_conserved, to_conserved

GENUINELY_NONLINEAR = "genuinely-nonlinear"
LINEARLY_DEGENERATE = "linearly-degenerate"

_MATCH_TOL = 1e-8


@dataclass(frozen=True)
class CharField:
    C: float
    family: tuple  # (m, root index)
    nature: str

    @property
    def genuinely_nonlinear(self) -> bool:
        return self.nature == GENUINELY_NONLINEAR


@dataclass(frozen=True)
class ElementaryWave:
    kind: str  # rarefaction | contact | shock
    left: MomentState
    right: MomentState
    field: CharField
    speed: object  # scalar for contact/shock, (lambda_L, lambda_R) for fans


@dataclass(frozen=True)
class ContactVerdict:
    ok: bool
    velocity_jump: float
    pressure_jump: float
    eigenvalue_jump: float


@dataclass(frozen=True)
class ShockReport:
    speed: float
    residuals: np.ndarray  # per conserved row, index order
    conservative_max: float
    top_max: float
    lax_per_root: tuple  # bool per top-family root
    entropy: bool
    density_pressure_product: float
    mass_flux_speed: Optional[float]


@dataclass(frozen=True)
class WaveTableVerdict:
    ok: bool
    relations: dict


def wave_speed(state: MomentState, C: float) -> float:
    return float(state.u[0] + C * np.sqrt(state.theta_tensor[0, 0]))


def classify_field(state: MomentState, C: float) -> CharField:
    """Nature of the characteristic field with unit root C.

    Genuinely nonlinear exactly when C is a nonzero root of the top-family
    Hermite polynomial; every other field is linearly degenerate. The
    directional derivative of the wave speed along the eigenvector has the
    closed form (C^2 + 1) sqrt(theta_11) / (2 rho) * C * R_0, zero exactly in
    the degenerate cases.
    """
    M = state.M
    scale = 1.0 + abs(C)
    families = sorted({L.family_m for L in spectrum_regularized(state).lines})
    hit = None
    for m in sorted(families, reverse=True):
        roots = he_roots(m)
        j = int(np.argmin(np.abs(roots - C)))
        if abs(roots[j] - C) <= _MATCH_TOL * scale:
            hit = (m, j)
            break
    if hit is None:
        raise ValueError(f"{C} is not a unit root of any eigenvalue family")
    gn = hit[0] == M + 1 and abs(C) > _MATCH_TOL
    return CharField(
        C=float(C),
        family=hit,
        nature=GENUINELY_NONLINEAR if gn else LINEARLY_DEGENERATE,
    )


def speed_gradient_dot_eigenvector(state: MomentState, field: CharField) -> float:
    """Analytic directional derivative of u1 + C sqrt(theta_11) along the
    eigenvector of the field, with the density entry normalized to rho."""
    C = field.C
    th = float(state.theta_tensor[0, 0])
    return (C**2 + 1) * np.sqrt(th) / (2 * state.rho) * C * _density_entry(
        state, field
    )


def _density_entry(state: MomentState, field: CharField) -> float:
    # with the leading-entry-1 convention, the density component is rho for
    # the top family and 0 otherwise
    return state.rho if field.family[0] == state.M + 1 else 0.0


def _field_eigenvector(state: MomentState, field: CharField) -> np.ndarray:
    m, j = field.family
    h = state.M + 1 - m
    lam = float(he_roots(m)[j] * np.sqrt(state.theta_tensor[0, 0]))
    r = block_eigenvector(h, lam, state)
    hat = (h,) + (0,) * max(state.D - 2, 0) if state.D > 1 else ()
    R = prolong(r, hat, lam, state)
    if field.family[0] == state.M + 1:
        R = R * state.rho  # density-entry-rho normalization for fan curves
    return R


def rarefaction_curve(state0: MomentState, field: CharField, zeta: float) -> MomentState:
    """Point at parameter zeta on the integral curve of the field through
    state0.

    Density, first velocity, and first pressure follow closed exponential
    forms; the remaining components solve dw/dzeta = R(w) numerically with
    the same eigenvector normalization.
    """
    if zeta == 0.0:
        return state0
    C = field.C
    if abs(C * C - 1.0) < 1e-8:
        warnings.warn("unit-root magnitude 1: using the series limit")

    def rhs(z, wvec):
        st = MomentState.from_w(state0.D, state0.M, wvec)
        return _field_eigenvector(st, field)

    sol = solve_ivp(
        rhs, (0.0, zeta), state0.w, method="RK45", rtol=1e-11, atol=1e-12,
        dense_output=False,
    )
    if not sol.success:
        raise RuntimeError(f"integral-curve integration failed: {sol.message}")
    out = MomentState.from_w(state0.D, state0.M, sol.y[:, -1])
    if not field.genuinely_nonlinear:
        return out

    rho0 = state0.rho
    th0 = float(state0.theta_tensor[0, 0])
    p0 = float(state0.p[0, 0])
    eps = C * C - 1.0
    rho = rho0 * np.exp(zeta)
    if abs(eps) < 1e-12:
        u1 = state0.u[0] + C * np.sqrt(th0) * zeta
    else:
        u1 = state0.u[0] + 2 * C * np.sqrt(th0) * np.expm1(eps * zeta / 2) / eps
    p11 = p0 * np.exp(C * C * zeta)
    u = np.array(out.u)
    u[0] = u1
    p = np.array(out.p)
    p[0, 0] = p11
    return MomentState(D=out.D, M=out.M, rho=float(rho), u=u, p=p, f=dict(out.f))


def contact_check(wL: MomentState, wR: MomentState, field: CharField) -> ContactVerdict:
    """Contact conditions: equal first velocity, first pressure, and wave
    speed across the jump."""
    du = float(wR.u[0] - wL.u[0])
    dp = float(wR.p[0, 0] - wL.p[0, 0])
    dl = wave_speed(wR, field.C) - wave_speed(wL, field.C)
    scale = max(abs(wL.u[0]), abs(wR.u[0]), wL.p[0, 0], wR.p[0, 0], 1.0)
    tol = 1e-10 * scale
    return ContactVerdict(
        ok=bool(abs(du) <= tol and abs(dp) <= tol and abs(dl) <= tol),
        velocity_jump=du,
        pressure_jump=dp,
        eigenvalue_jump=float(dl),
    )


def _closure_flux(F: ConservedMoments) -> np.ndarray:
    """Per-row flux (alpha_1 + 1) F_{alpha + e1}, closing the top rows with
    zero coefficients one order up."""
    st = from_conserved(F)
    lifted = MomentState(
        D=st.D, M=st.M + 1, rho=st.rho, u=st.u, p=st.p, f=dict(st.f)
    )
    big = to_conserved(lifted)
    s = F.index_set
    out = np.empty(s.N)
    for k, a in enumerate(s.indices):
        up = tuple(a[i] + (1 if i == 0 else 0) for i in range(len(a)))
        out[k] = (a[0] + 1) * big.value(up)
    return out


def _path_tangent_w(st: MomentState, dF: np.ndarray) -> np.ndarray:
    """State-vector tangent induced by a linear conserved-moment path,
    filled only on the (rho, u, pressure-slot) components; the top-order
    correction rows have no other nonzero columns."""
    D = st.D
    s = st.index_set
    F = to_conserved(st).F
    rho = st.rho
    drho = dF[0]
    dw = np.zeros(s.N)
    dw[0] = drho
    for i in range(1, D + 1):
        dw[s.rank0(unit(D, i))] = (dF[s.rank0(unit(D, i))] - st.u[i - 1] * drho) / rho
    for i, j in combinations_with_replacement(range(1, D + 1), 2):
        Fi = F[s.rank0(unit(D, i))]
        Fj = F[s.rank0(unit(D, j))]
        dFi = dF[s.rank0(unit(D, i))]
        dFj = dF[s.rank0(unit(D, j))]
        # slot_ij = F_{e_i+e_j} - F_{e_i} F_{e_j} / ((1 + delta_ij) F_0)
        pair = tuple(a + b for a, b in zip(unit(D, i), unit(D, j)))
        dw[s.rank0(pair)] = dF[s.rank0(pair)] - (
            (dFi * Fj + Fi * dFj) / F[0] - Fi * Fj * drho / F[0] ** 2
        ) / (1 + (i == j))
    return dw


def _top_correction(st: MomentState, dF: np.ndarray) -> np.ndarray:
    """Nonconservative top-row terms contracted with the path tangent,
    as the regularization correction matrix applied to the tangent."""
    corr = regularization_correction(st, 1)
    return corr @ _path_tangent_w(st, dF)


def shock_speed_from_mass(FL: ConservedMoments, FR: ConservedMoments) -> Optional[float]:
    """Jump speed implied by the mass row, undefined for equal densities."""
    sL = from_conserved(FL)
    sR = from_conserved(FR)
    drho = sL.rho - sR.rho
    if drho == 0.0:
        return None
    return float((sL.rho * sL.u[0] - sR.rho * sR.u[0]) / drho)


def shock_check(
    FL: ConservedMoments, FR: ConservedMoments, S: float, path_steps: int = 32
) -> ShockReport:
    """Generalized jump-condition residuals for a candidate discontinuity.

    Rows below the top order are conservative and checked exactly; top rows
    combine the exact closed-flux difference with a quadrature of the
    nonconservative terms along the linear path in conserved moments.
    """
    s = FL.index_set
    M = FL.M
    dF = FR.F - FL.F
    gR = _closure_flux(FR)
    gL = _closure_flux(FL)
    residuals = S * dF - (gR - gL)

    nodes, weights = np.polynomial.legendre.leggauss(path_steps)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    top = [k for k, a in enumerate(s.indices) if order(a) == M]
    for nu, wq in zip(nodes, weights):
        Fm = ConservedMoments(D=FL.D, M=M, F=FL.F + nu * dF)
        st = from_conserved(Fm)
        residuals -= wq * _top_correction(st, dF)

    cons = [k for k, a in enumerate(s.indices) if order(a) < M]
    sL = from_conserved(FL)
    sR = from_conserved(FR)
    roots = he_roots(M + 1)
    lax = []
    for c in roots:
        lax.append(bool(wave_speed(sL, c) > S > wave_speed(sR, c)))
    prod = float((sL.rho - sR.rho) * (sL.p[0, 0] - sR.p[0, 0]))
    return ShockReport(
        speed=float(S),
        residuals=residuals,
        conservative_max=float(np.max(np.abs(residuals[cons]))),
        top_max=float(np.max(np.abs(residuals[top]))),
        lax_per_root=tuple(lax),
        entropy=any(lax),
        density_pressure_product=prod,
        mass_flux_speed=shock_speed_from_mass(FL, FR),
    )


def wave_table_check(wave: ElementaryWave) -> WaveTableVerdict:
    """Sign relations of (u1, p11) across an elementary wave.

    Rarefactions raise the velocity left to right, with pressure rising for
    right-running fields and falling for left-running ones; shocks do the
    opposite; contacts keep both equal.
    """
    uL, uR = float(wave.left.u[0]), float(wave.right.u[0])
    pL, pR = float(wave.left.p[0, 0]), float(wave.right.p[0, 0])
    tol_u = 1e-10 * max(abs(uL), abs(uR), 1.0)
    tol_p = 1e-10 * max(pL, pR)
    C = wave.field.C
    rel = {}
    if wave.kind == "rarefaction":
        rel["velocity_rises"] = uR - uL > tol_u
        rel["pressure"] = (pR - pL > tol_p) if C > 0 else (pL - pR > tol_p)
    elif wave.kind == "shock":
        rel["velocity_drops"] = uL - uR > tol_u
        rel["pressure"] = (pL - pR > tol_p) if C > 0 else (pR - pL > tol_p)
    elif wave.kind == "contact":
        rel["velocity_equal"] = abs(uR - uL) <= tol_u
        rel["pressure_equal"] = abs(pR - pL) <= tol_p
    else:
        raise ValueError(f"unknown wave kind {wave.kind!r}")
    return WaveTableVerdict(ok=all(rel.values()), relations=rel)
