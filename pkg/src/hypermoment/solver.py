"""First-order finite-volume solver for the regularized moment system in one
space dimension, with BGK/ES-BGK relaxation and a discrete-velocity kinetic
reference solution.

Transport treats rows by conservation type. Moments of order below M carry
exact linear fluxes and are updated in flux-difference form, so their cell
totals telescope to round-off. Order-M rows are updated in fluctuation form:
closure flux difference plus the regularization correction evaluated at the
interface mean state, with Rusanov dissipation on the conserved jump. The
relaxation source is sub-stepped explicitly after transport.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

from .assembly import assemble, regularization_correction, regularize, source
from .hermite import AnisotropicBasis, ghe_table, he_roots, weight
from .index import IndexSet, order
from .state import (
    AdmissibilityError,
    CollisionModel,
    ConservedMoments,
    MomentState,
    from_conserved,
    heat_flux,
    to_conserved,
)


class CFLViolation(ValueError):
    """Requested time step exceeds the stable transport bound."""


class AdmissibilityLoss(RuntimeError):
    """An updated cell left the admissible set. Carries the cell index."""

    def __init__(self, message, cell: int):
        super().__init__(message)
        self.cell = cell


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered mesh on [x_min, x_max]."""

    nx: int
    x_min: float = 0.0
    x_max: float = 1.0
    boundary: str = "copy"

    def __post_init__(self):
        if self.nx < 4:
            raise ValueError(f"need at least 4 cells, got {self.nx}")
        if not self.x_max > self.x_min:
            raise ValueError("domain must have positive length")
        if self.boundary not in ("copy", "periodic"):
            raise ValueError(f"unknown boundary kind {self.boundary!r}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @cached_property
    def centers(self) -> np.ndarray:
        x = self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        x.setflags(write=False)
        return x


@dataclass(frozen=True)
class SimulationConfig:
    D: int
    M: int
    grid: Grid1D
    t_end: float
    cfl: float = 0.8
    collision: CollisionModel = CollisionModel(nu=0.0)
    n_snapshots: int = 2

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"need order M >= 2, got {self.M}")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"CFL number must be in (0, 1], got {self.cfl}")
        if not self.t_end > 0.0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.n_snapshots < 2:
            raise ValueError("need at least the initial and final snapshots")


@lru_cache(maxsize=None)
def _top_root(n: int) -> float:
    return float(he_roots(n)[-1])


def max_signal_speed(state: MomentState) -> float:
    """|u_1| plus the largest characteristic offset C_max sqrt(theta_11)."""
    th11 = state.p[0, 0] / state.rho
    return abs(float(state.u[0])) + _top_root(state.M + 1) * math.sqrt(th11)


def interface_state(left: MomentState, right: MomentState) -> MomentState:
    """State at which interface matrices are evaluated: arithmetic mean of
    the packed variables. Single knob for trying other averages."""
    return MomentState.from_w(left.D, left.M, 0.5 * (left.w + right.w))


@lru_cache(maxsize=None)
def _layout(D: int, M: int):
    """Rank bookkeeping between the order-M set and the lifted order-(M+1)
    set: positions of the original indices, of their first-axis raises, the
    flux multipliers alpha_1+1, and the top-order row mask."""
    s = IndexSet(D, M)
    su = IndexSet(D, M + 1)
    same = np.array([su.rank0(a) for a in s.indices])
    up = np.array(
        [su.rank0(tuple(x + (1 if i == 0 else 0) for i, x in enumerate(a))) for a in s.indices]
    )
    mult = np.array([a[0] + 1 for a in s.indices], dtype=float)
    top = np.array([order(a) == M for a in s.indices])
    return same, up, mult, top


def _moments_and_flux(state: MomentState):
    """Conserved vector F and closure flux G of one cell.

    Both read off the moments of the state lifted one order with its
    coefficients unchanged (the closure zeroes the new order), so row alpha
    of G is (alpha_1+1) F_{alpha+e_1}.
    """
    same, up, mult, _ = _layout(state.D, state.M)
    lifted = MomentState(
        D=state.D, M=state.M + 1, rho=state.rho, u=state.u, p=state.p, f=state.f
    )
    Fl = to_conserved(lifted).F
    return Fl[same], mult * Fl[up]


def grad_flux(state: MomentState) -> np.ndarray:
    """Flux vector of the closed system at one state."""
    return _moments_and_flux(state)[1]


def _spectral_bound_check(state: MomentState):
    """Closed-form speed bound must dominate the numerical spectrum."""
    A = regularize(assemble(state, 1), state).entries
    A = A + float(state.u[0]) * np.eye(A.shape[0])
    numeric = float(np.max(np.abs(np.linalg.eigvals(A))))
    bound = max_signal_speed(state)
    if numeric > bound * (1.0 + 1e-8) + 1e-12:
        raise RuntimeError(
            f"speed bound {bound} underestimates the numerical spectrum {numeric}"
        )


def _relax(state: MomentState, dt: float, model: CollisionModel) -> MomentState:
    """Explicit relaxation sub-steps with dt_sub <= 1/(2 nu)."""
    n_sub = max(1, math.ceil(2.0 * model.nu * dt))
    h = dt / n_sub
    for _ in range(n_sub):
        w = state.w + h * source(state, model)
        state = MomentState.from_w(state.D, state.M, w)
    return state


def step(cells: Sequence[MomentState], dt: float, config: SimulationConfig) -> list:
    """One transport-plus-relaxation step over the whole grid."""
    cells = list(cells)
    grid = config.grid
    if len(cells) != grid.nx:
        raise ValueError(f"expected {grid.nx} cells, got {len(cells)}")
    D, M = config.D, config.M
    for c in cells:
        if (c.D, c.M) != (D, M):
            raise ValueError("cell dimensions do not match the configuration")
    dx = grid.dx
    nx = grid.nx

    speeds = np.array([max_signal_speed(c) for c in cells])
    bound = config.cfl * dx / float(speeds.max())
    if dt > bound * (1.0 + 1e-12):
        raise CFLViolation(f"dt={dt} exceeds the stable bound {bound}")
    _spectral_bound_check(cells[int(np.argmax(speeds))])

    _, _, _, top = _layout(D, M)
    cons = ~top
    N = top.size
    F = np.empty((nx, N))
    G = np.empty((nx, N))
    for i, c in enumerate(cells):
        F[i], G[i] = _moments_and_flux(c)
    W = np.array([c.w for c in cells])

    # ghost cells by boundary kind; padded index g is cell g-1
    lg, rg = (nx - 1, 0) if grid.boundary == "periodic" else (0, nx - 1)
    padded = [cells[lg]] + cells + [cells[rg]]
    Fp = np.vstack([F[lg], F, F[rg]])
    Gp = np.vstack([G[lg], G, G[rg]])
    Wp = np.vstack([W[lg], W, W[rg]])
    sp = np.concatenate([[speeds[lg]], speeds, [speeds[rg]]])

    a_if = np.maximum(sp[:-1], sp[1:])  # (nx+1,) interface dissipation speeds
    dF = Fp[1:] - Fp[:-1]
    dG = Gp[1:] - Gp[:-1]

    # nonconservative top-row term at each interface, from the correction
    # matrix at the mean state applied to the jump of the packed variables
    noncons = np.zeros((nx + 1, N))
    if M >= 3:
        for k in range(nx + 1):
            if not np.array_equal(Wp[k], Wp[k + 1]):
                mid = interface_state(padded[k], padded[k + 1])
                noncons[k] = regularization_correction(mid, 1) @ (Wp[k + 1] - Wp[k])

    H = 0.5 * (Gp[:-1] + Gp[1:] - a_if[:, None] * dF)
    total = dG + noncons
    diss = a_if[:, None] * dF
    fluct_minus = 0.5 * (total - diss)  # enters the cell left of the interface
    fluct_plus = 0.5 * (total + diss)  # enters the cell right of the interface

    Fn = F.copy()
    Fn[:, cons] -= dt / dx * (H[1:][:, cons] - H[:-1][:, cons])
    Fn[:, top] -= dt / dx * (fluct_plus[:-1][:, top] + fluct_minus[1:][:, top])

    out = []
    for i in range(nx):
        try:
            out.append(from_conserved(ConservedMoments(D=D, M=M, F=Fn[i])))
        except AdmissibilityError as e:
            raise AdmissibilityLoss(f"cell {i} left the admissible set: {e}", cell=i) from e
    if config.collision.nu > 0.0:
        for i in range(nx):
            try:
                out[i] = _relax(out[i], dt, config.collision)
            except AdmissibilityError as e:
                raise AdmissibilityLoss(
                    f"cell {i} left the admissible set during relaxation: {e}", cell=i
                ) from e
    return out


# -- driving and output --------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    """Snapshot series of the primary observables on the grid."""

    config: SimulationConfig
    times: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    u1: np.ndarray
    p11: np.ndarray
    theta: np.ndarray
    q1: np.ndarray
    final_states: tuple

    def rows(self):
        """CSV rows (t, x, rho, u1, p11, theta, q1)."""
        for j, t in enumerate(self.times):
            for i, xi in enumerate(self.x):
                yield (
                    float(t),
                    float(xi),
                    float(self.rho[j, i]),
                    float(self.u1[j, i]),
                    float(self.p11[j, i]),
                    float(self.theta[j, i]),
                    float(self.q1[j, i]),
                )


def _snapshot(cells):
    rho = np.array([c.rho for c in cells])
    u1 = np.array([float(c.u[0]) for c in cells])
    p11 = np.array([c.p[0, 0] for c in cells])
    th = np.array([c.theta for c in cells])
    if cells[0].M >= 3:
        q1 = np.array([heat_flux(c)[0] for c in cells])
    else:
        q1 = np.zeros(len(cells))
    return rho, u1, p11, th, q1


def riemann_cells(config: SimulationConfig, left: MomentState, right: MomentState) -> list:
    """Initial cells: left state below the domain midpoint, right above."""
    mid = 0.5 * (config.grid.x_min + config.grid.x_max)
    return [left if xc < mid else right for xc in config.grid.centers]


def simulate(config: SimulationConfig, left: MomentState, right: MomentState) -> SimulationResult:
    """Run the Riemann problem left|right and record snapshots."""
    for st, name in ((left, "left"), (right, "right")):
        if (st.D, st.M) != (config.D, config.M):
            raise ValueError(f"{name} state dimensions do not match the configuration")
    cells = riemann_cells(config, left, right)
    times = np.linspace(0.0, config.t_end, config.n_snapshots)
    snaps = [_snapshot(cells)]
    t = 0.0
    for target in times[1:]:
        while t < target - 1e-12 * config.t_end:
            amax = max(max_signal_speed(c) for c in cells)
            dt = min(config.cfl * config.grid.dx / amax, target - t)
            cells = step(cells, dt, config)
            t += dt
        snaps.append(_snapshot(cells))
    stack = [np.stack(arrs) for arrs in zip(*snaps)]
    return SimulationResult(
        config=config,
        times=times,
        x=config.grid.centers,
        rho=stack[0],
        u1=stack[1],
        p11=stack[2],
        theta=stack[3],
        q1=stack[4],
        final_states=tuple(cells),
    )


# -- discrete-velocity kinetic reference ----------------------------------------


@dataclass
class KineticOracle:
    """Uniform velocity grid and the cell-by-velocity distribution array."""

    v: np.ndarray
    dv: float
    f: np.ndarray

    def moments(self):
        """(rho, u, p, q) of every cell by midpoint quadrature."""
        dv = self.dv
        rho = self.f.sum(axis=1) * dv
        u = (self.f @ self.v) * dv / rho
        c = self.v[None, :] - u[:, None]
        p = (self.f * c**2).sum(axis=1) * dv
        q = 0.5 * (self.f * c**3).sum(axis=1) * dv
        return rho, u, p, q


def _expansion_values(state: MomentState, v: np.ndarray) -> np.ndarray:
    """Pointwise distribution reconstructed from the moment state."""
    th = state.p[0, 0] / state.rho
    basis = AnisotropicBasis(np.array([[th]]))
    xi = (v - float(state.u[0]))[:, None]
    table = ghe_table(basis, xi, state.M)
    acc = state.rho * table[(0,)]
    for a, val in state.f.items():
        acc = acc + val * table[a]
    return weight(basis, xi) * acc


def build_oracle(
    grid: Grid1D, left: MomentState, right: MomentState, n_v: int = 64, K: float = 6.0
) -> KineticOracle:
    """Discretize the Riemann data in velocity space.

    Bounds span u +- K sqrt(theta) over the two states (symmetric K sqrt of
    the largest theta when both velocities vanish); midpoint grid, so the
    discrete moments hold to the Gaussian tail truncation level.
    """
    for st in (left, right):
        if st.D != 1:
            raise ValueError("the kinetic reference is one-dimensional")
    if n_v < 48:
        raise ValueError(f"need at least 48 velocity points, got {n_v}")
    if K < 6.0:
        raise ValueError(f"need a velocity span of at least 6 sigma, got K={K}")
    spans = [(float(st.u[0]), math.sqrt(st.p[0, 0] / st.rho)) for st in (left, right)]
    vmin = min(u - K * s for u, s in spans)
    vmax = max(u + K * s for u, s in spans)
    dv = (vmax - vmin) / n_v
    v = vmin + (np.arange(n_v) + 0.5) * dv

    mid = 0.5 * (grid.x_min + grid.x_max)
    row_l = _expansion_values(left, v)
    row_r = _expansion_values(right, v)
    f = np.where((grid.centers < mid)[:, None], row_l[None, :], row_r[None, :])
    return KineticOracle(v=v, dv=dv, f=f.copy())


@dataclass(frozen=True)
class KineticResult:
    """Moment snapshot series of the kinetic reference run."""

    times: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    u1: np.ndarray
    p11: np.ndarray
    q1: np.ndarray

    @property
    def theta(self) -> np.ndarray:
        return self.p11 / self.rho

    def rows(self):
        """CSV rows (t, x, rho, u1, p11, theta, q1)."""
        for j, t in enumerate(self.times):
            for i, xi in enumerate(self.x):
                yield (
                    float(t),
                    float(xi),
                    float(self.rho[j, i]),
                    float(self.u1[j, i]),
                    float(self.p11[j, i]),
                    float(self.theta[j, i]),
                    float(self.q1[j, i]),
                )


def _maxwellian(rho, u, theta, v):
    c = v[None, :] - u[:, None]
    norm = rho / np.sqrt(2.0 * np.pi * theta)
    return norm[:, None] * np.exp(-0.5 * c**2 / theta[:, None])


def kinetic_reference(
    config: SimulationConfig,
    left: MomentState,
    right: MomentState,
    n_v: int = 64,
    K: float = 6.0,
) -> KineticResult:
    """Upwind discrete-velocity run of the same Riemann problem.

    First-order transport per velocity point plus pointwise relaxation
    toward the Maxwellian of the local discrete moments (the relaxation
    sub-flow is integrated exactly over each step, its target being
    stationary). Warns when mass reaches the velocity boundary.
    """
    if config.D != 1:
        raise ValueError("the kinetic reference is one-dimensional")
    grid = config.grid
    oracle = build_oracle(grid, left, right, n_v=n_v, K=K)
    v, dv = oracle.v, oracle.dv
    f = oracle.f
    nx, dx = grid.nx, grid.dx
    nu = config.collision.nu
    vp = np.maximum(v, 0.0)
    vm = np.minimum(v, 0.0)
    lg, rg = (nx - 1, 0) if grid.boundary == "periodic" else (0, nx - 1)

    def snapshot(fa):
        rho = fa.sum(axis=1) * dv
        u = (fa @ v) * dv / rho
        c = v[None, :] - u[:, None]
        p = (fa * c**2).sum(axis=1) * dv
        q = 0.5 * (fa * c**3).sum(axis=1) * dv
        return rho, u, p, q

    times = np.linspace(0.0, config.t_end, config.n_snapshots)
    snaps = [snapshot(f)]
    clip_peak = 0.0
    dt_max = config.cfl * dx / float(np.max(np.abs(v)))
    t = 0.0
    for target in times[1:]:
        while t < target - 1e-12 * config.t_end:
            dt = min(dt_max, target - t)
            fp = np.vstack([f[lg], f, f[rg]])
            flux = vp * fp[:-1] + vm * fp[1:]
            f = f - dt / dx * (flux[1:] - flux[:-1])
            if nu > 0.0:
                rho, u, p, _ = snapshot(f)
                g = _maxwellian(rho, u, p / rho, v)
                f = g + (f - g) * math.exp(-nu * dt)
            t += dt
            edge = np.abs(f[:, 0]).sum() + np.abs(f[:, -1]).sum()
            clip_peak = max(clip_peak, float(edge / np.abs(f).sum()))
        snaps.append(snapshot(f))
    if clip_peak > 1e-6:
        warnings.warn(
            f"velocity domain clipping: boundary mass fraction {clip_peak:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    stack = [np.stack(arrs) for arrs in zip(*snaps)]
    return KineticResult(
        times=times,
        x=grid.centers,
        rho=stack[0],
        u1=stack[1],
        p11=stack[2],
        q1=stack[3],
    )
