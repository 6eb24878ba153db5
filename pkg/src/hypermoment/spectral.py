"""Closed-form spectral machinery for the regularized moment system.

The regularized transport matrix in a given direction decomposes, after the
block permutation, into lower Hessenberg diagonal blocks whose characteristic
polynomials are rescaled probabilists' Hermite polynomials. Eigenvalues come
from tabulated Hermite roots; eigenvectors from forward substitution through
the Hessenberg blocks plus a proper prolongation to the full system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import assemble, directional, regularize
from .hermite import he_roots
from .index import IndexSet, block_permutation, order
from .state import MomentState

_COMPLEX_TOL = 1e-6  # |Im| above this (relative) counts as a complex eigenvalue
_COND_LIMIT = 1e12


class ProlongationError(RuntimeError):
    """A lower block system was inconsistent (conjecture-dependent path)."""


@dataclass(frozen=True)
class SpectralLine:
    value: float
    multiplicity: int
    family_m: int
    root_index: int


@dataclass(frozen=True)
class Spectrum:
    D: int
    M: int
    lines: tuple
    Lambda: np.ndarray
    R: Optional[np.ndarray] = None
    residual: Optional[float] = None
    condition: Optional[float] = None
    method: str = "closed-form"

    def __post_init__(self):
        L = np.asarray(self.Lambda, dtype=float)
        L.setflags(write=False)
        object.__setattr__(self, "Lambda", L)
        if self.R is not None:
            R = np.asarray(self.R, dtype=float)
            R.setflags(write=False)
            object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class HyperbolicityVerdict:
    real_spectrum: bool
    diagonalizable: bool
    worst_complex_pair: Optional[complex]
    max_imag: float
    condition: float

    @property
    def hyperbolic(self) -> bool:
        return self.real_spectrum and self.diagonalizable


# -- characteristic polynomial of the unregularized leading block -------------


def _monic_coeffs(n: int, theta: float) -> np.ndarray:
    """Ascending coefficients of the monic rescaled Hermite polynomial."""
    prev = np.array([1.0])
    if n == 0:
        return prev
    cur = np.array([0.0, 1.0])
    for k in range(1, n):
        nxt = np.zeros(k + 2)
        nxt[1:] = cur
        nxt[: k] -= k * theta * prev
        prev, cur = cur, nxt
    return cur


def charpoly_1d_unregularized(state: MomentState) -> np.ndarray:
    """Ascending coefficients in lambda of the characteristic polynomial of
    the leading permuted block of the unregularized matrix.

    The polynomial is the monic rescaled Hermite polynomial of degree M+1
    minus (M+1)! (lambda f_M + (lambda^2 - theta) f_{M-1} / 2) / rho, using
    the pure first-axis coefficients.
    """
    M = state.M
    th = float(state.theta_tensor[0, 0])
    c = _monic_coeffs(M + 1, th)
    fM = state.f_value((M,) + (0,) * (state.D - 1))
    fM1 = state.f_value((M - 1,) + (0,) * (state.D - 1))
    fact = float(math.factorial(M + 1))
    c[1] -= fact * fM / state.rho
    c[2] -= fact * fM1 / (2 * state.rho)
    c[0] += fact * fM1 * th / (2 * state.rho)
    return c


# -- hyperbolicity of the unregularized system ---------------------------------


def hyperbolicity_verdict(state: MomentState, d: int = 1, regularized: bool = False) -> HyperbolicityVerdict:
    mat = assemble(state, d)
    if regularized:
        mat = regularize(mat, state)
    lam, V = np.linalg.eig(mat.entries)
    scale = 1.0 + np.abs(lam)
    rel_imag = np.abs(lam.imag) / scale
    worst = None
    if rel_imag.max() > _COMPLEX_TOL:
        worst = complex(lam[np.argmax(rel_imag)])
    cond = float(np.linalg.cond(V))
    return HyperbolicityVerdict(
        real_spectrum=worst is None,
        diagonalizable=bool(np.isfinite(cond) and cond < _COND_LIMIT),
        worst_complex_pair=worst,
        max_imag=float(np.abs(lam.imag).max()),
        condition=cond,
    )


def unregularized_eigenvalues(state: MomentState, d: int = 1) -> np.ndarray:
    return np.linalg.eig(assemble(state, d).entries)[0]


def find_nonhyperbolic_state(D: int, M: int, max_doublings: int = 60):
    """Admissible state whose unregularized first-axis matrix has a complex
    eigenvalue, found by scaling the pure first-axis top-order coefficient.

    Returns (state, witness eigenvalue). The witness imaginary part exceeds
    1e-3 sqrt(theta_11) so it is far outside eigensolver noise.
    """
    if M < 3:
        raise ValueError(f"need order M >= 3, got {M}")
    top = (M,) + (0,) * (D - 1)
    t = 0.05
    for _ in range(max_doublings):
        st = MomentState(
            D=D, M=M, rho=1.0, u=np.zeros(D), p=np.eye(D), f={top: t}
        )
        lam = unregularized_eigenvalues(st)
        k = int(np.argmax(np.abs(lam.imag)))
        if abs(lam.imag[k]) > 1e-3:
            return st, complex(lam[k])
        t *= 2.0
    raise RuntimeError(
        f"no complex eigenvalue found for D={D}, M={M} with top coefficient up to {t}"
    )


# -- closed-form spectrum ------------------------------------------------------


def _family_counts(D: int, M: int) -> dict:
    """Number of trailing sub-indices per family m = M + 1 - |hat|."""
    counts = {}
    if D == 1:
        return {M + 1: 1}
    for h in IndexSet(D - 1, M).indices:
        m = M + 1 - order(h)
        counts[m] = counts.get(m, 0) + 1
    return counts


def spectrum_regularized(state: MomentState) -> Spectrum:
    """Eigenvalue multiset of the regularized first-axis matrix: scaled
    Hermite roots with multiplicities counted over trailing sub-indices."""
    sq = float(np.sqrt(state.theta_tensor[0, 0]))
    counts = _family_counts(state.D, state.M)
    lines = []
    values = []
    for m in sorted(counts):
        mult = counts[m]
        roots = he_roots(m) * sq
        for j, val in enumerate(roots):
            lines.append(SpectralLine(float(val), mult, m, j))
            values.extend([float(val)] * mult)
    lines.sort(key=lambda L: (L.value, L.family_m))
    return Spectrum(
        D=state.D,
        M=state.M,
        lines=tuple(lines),
        Lambda=np.sort(np.array(values)),
    )


# -- block eigenvectors and prolongation ---------------------------------------


def _hessenberg_forward(B: np.ndarray, lam: float, v: np.ndarray, head: float) -> tuple:
    """Solve rows 0..n-2 of (B - lam I) r = v for r given r[0] = head.

    Returns (r, last-row residual). Requires positive superdiagonal.
    """
    n = B.shape[0]
    r = np.zeros(n)
    r[0] = head
    for k in range(n - 1):
        r[k + 1] = (v[k] + lam * r[k] - B[k, : k + 1] @ r[: k + 1]) / B[k, k + 1]
    res = B[n - 1, :] @ r - lam * r[n - 1] - v[n - 1]
    return r, float(res)


def _permuted_regularized(state: MomentState) -> tuple:
    perm = block_permutation(state.index_set)
    Atil = regularize(assemble(state, 1), state).entries
    return perm, perm.conjugate(Atil)


def block_eigenvector(n_hat: int, lam: float, state: MomentState, regularized: bool = True) -> np.ndarray:
    """Eigenvector of the diagonal block whose trailing sub-index has order
    n_hat, normalized to leading entry 1.

    The block is lower Hessenberg with positive superdiagonal, so forward
    substitution from the leading entry determines the vector; the last-row
    residual vanishes exactly when lam is an eigenvalue of the block.
    """
    if not 0 <= n_hat <= state.M:
        raise ValueError(f"block order must be in 0..{state.M}, got {n_hat}")
    perm = block_permutation(state.index_set)
    mat = assemble(state, 1)
    if regularized:
        mat = regularize(mat, state)
    B = perm.conjugate(mat.entries)
    for h, start, size in perm.blocks:
        if order(h) == n_hat:
            blk = B[start : start + size, start : start + size]
            r, res = _hessenberg_forward(blk, lam, np.zeros(size), 1.0)
            scale = np.abs(blk).max() * max(1.0, np.abs(r).max())
            if abs(res) > 1e-10 * max(scale, 1.0):
                raise ValueError(
                    f"{lam} is not an eigenvalue of the order-{n_hat} block "
                    f"(residual {res:.3e})"
                )
            return r
    raise AssertionError("unreachable: block not found")


def _prolong_permuted(
    perm, B: np.ndarray, target: int, lam: float, block_vec: np.ndarray
) -> np.ndarray:
    """Proper prolongation in permuted coordinates.

    Blocks before the target stay zero. Each later block solves its
    Hessenberg system with the coupling from already-filled blocks; the
    leading entry is fixed by the last-row consistency equation except when
    the block is singular at lam (same size as the target, or odd size at
    lam = 0), where zero is the canonical choice.
    """
    N = B.shape[0]
    Rp = np.zeros(N)
    th, ts, tn = perm.blocks[target]
    Rp[ts : ts + tn] = block_vec
    for j in range(target + 1, len(perm.blocks)):
        h, sj, nj = perm.blocks[j]
        v = -(B[sj : sj + nj, :sj] @ Rp[:sj])
        singular = nj == tn or (lam == 0.0 and nj % 2 == 1)
        if singular:
            if not np.any(v):
                continue  # Rp stays zero on this block
            r, res = _hessenberg_forward(B[sj : sj + nj, sj : sj + nj], lam, v, 0.0)
            scale = max(1.0, np.abs(v).max(), np.abs(r).max())
            if abs(res) > 1e-8 * scale:
                raise ProlongationError(
                    f"singular block {h} inconsistent at lambda={lam} (residual {res:.3e})"
                )
            Rp[sj : sj + nj] = r
            continue
        blk = B[sj : sj + nj, sj : sj + nj]
        r_part, res_part = _hessenberg_forward(blk, lam, v, 0.0)
        r_hom, res_hom = _hessenberg_forward(blk, lam, np.zeros(nj), 1.0)
        if abs(res_hom) <= 1e-12 * max(1.0, np.abs(r_hom).max()):
            raise ProlongationError(
                f"unexpected singular block {h} at lambda={lam}"
            )
        head = -res_part / res_hom
        Rp[sj : sj + nj] = r_part + head * r_hom
    return Rp


def prolong(block_vector, hat_alpha, lam: float, state: MomentState) -> np.ndarray:
    """Extend a diagonal-block eigenvector with trailing sub-index hat_alpha
    to a full eigenvector of the regularized first-axis matrix, in the
    original packing order."""
    hat_alpha = tuple(hat_alpha)
    perm, B = _permuted_regularized(state)
    target = None
    for k, (h, _, _) in enumerate(perm.blocks):
        if h == hat_alpha:
            target = k
            break
    if target is None:
        raise ValueError(f"no block with trailing sub-index {hat_alpha}")
    block_vector = np.asarray(block_vector, dtype=float)
    if block_vector.shape != (perm.blocks[target][2],):
        raise ValueError("block vector length does not match the block size")
    Rp = _prolong_permuted(perm, B, target, lam, block_vector)
    return perm.inverse_apply(Rp)


def full_eigendecomposition(state: MomentState) -> Spectrum:
    """Complete closed-form eigendecomposition of the regularized first-axis
    matrix. Falls back to a numerical eigensolve (with a warning) if the
    closed-form construction fails its residual or rank checks."""
    perm, B = _permuted_regularized(state)
    N = B.shape[0]
    sq = float(np.sqrt(state.theta_tensor[0, 0]))
    Atil = perm.unconjugate(B)

    cols = []
    lams = []
    lines = []
    try:
        root_cache = {}
        vec_cache = {}
        for t, (h, st_, n) in enumerate(perm.blocks):
            if n not in root_cache:
                root_cache[n] = he_roots(n) * sq
            for j, lam in enumerate(root_cache[n]):
                key = (order(h), j, n)
                if key not in vec_cache:
                    blk = B[st_ : st_ + n, st_ : st_ + n]
                    vec_cache[key] = _hessenberg_forward(
                        blk, lam, np.zeros(n), 1.0
                    )[0]
                Rp = _prolong_permuted(perm, B, t, float(lam), vec_cache[key])
                cols.append(perm.inverse_apply(Rp))
                lams.append(float(lam))
                lines.append(SpectralLine(float(lam), 1, n, j))
        R = np.column_stack(cols)
        Lam = np.array(lams)
        residual = float(np.max(np.abs(Atil @ R - R * Lam[None, :])))
        scale = float(np.max(np.abs(Atil)))
        sv = np.linalg.svd(R, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        if residual > 1e-8 * max(scale, 1.0) or not np.isfinite(cond) or cond > _COND_LIMIT:
            raise ProlongationError(
                f"closed-form residual {residual:.3e} or condition {cond:.3e} out of range"
            )
    except ProlongationError as err:
        warnings.warn(f"falling back to numerical eigensolve: {err}")
        lam, V = np.linalg.eig(Atil)
        order_ = np.argsort(lam.real)
        Lam = lam.real[order_]
        R = V.real[:, order_]
        sv = np.linalg.svd(R, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        residual = float(np.max(np.abs(Atil @ R - R * Lam[None, :])))
        return Spectrum(
            D=state.D, M=state.M,
            lines=tuple(
                SpectralLine(float(v), 1, -1, -1) for v in Lam
            ),
            Lambda=Lam, R=R, residual=residual, condition=cond,
            method="numerical",
        )

    # aggregate printable lines: multiplicity counts blocks sharing a family
    agg = {}
    for L in lines:
        key = (L.family_m, L.root_index)
        agg[key] = agg.get(key, 0) + 1
    printable = tuple(
        sorted(
            (
                SpectralLine(he_roots(m)[j] * sq, mult, m, j)
                for (m, j), mult in agg.items()
            ),
            key=lambda L: (L.value, L.family_m),
        )
    )
    return Spectrum(
        D=state.D, M=state.M, lines=printable, Lambda=Lam, R=R,
        residual=residual, condition=cond, method="closed-form",
    )


def rotation_spectrum_check(state: MomentState, n) -> float:
    """Maximum deviation between the numerically computed eigenvalues of the
    directional matrix and the scaled Hermite-root multiset."""
    n = np.asarray(n, dtype=float)
    A = directional(state, n).entries
    lam = np.linalg.eigvals(A)
    got = np.sort(lam.real)
    imag = float(np.max(np.abs(lam.imag)))
    sq = float(np.sqrt(n @ state.theta_tensor @ n))
    counts = _family_counts(state.D, state.M)
    expect = np.sort(
        np.concatenate(
            [np.repeat(he_roots(m) * sq, mult) for m, mult in counts.items()]
        )
    )
    return float(max(np.max(np.abs(got - expect)), imag))
