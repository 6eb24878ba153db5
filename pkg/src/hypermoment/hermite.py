"""Scaled Hermite polynomials, their anisotropic generalization, and root
machinery.

Two univariate scalings appear:

* ``he_eval`` evaluates the scaled family with recurrence
  He_{n+1} = (x He_n - n He_{n-1}) / theta, He_0 = 1, He_1 = x/theta.
* ``he_monic_eval`` evaluates the monic family with recurrence
  P_{n+1} = x P_n - n theta P_{n-1}, P_0 = 1, P_1 = x.

They differ by the factor theta^n and share every zero. The monic family is
what the closed-form eigenvector and characteristic-polynomial expressions
are written in; the scaled family is the expansion basis normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.linalg import eigh_tridiagonal

from .index import factorial, is_void, order, sub, unit


def he_eval(n: int, theta: float, x):
    """Scaled Hermite polynomial of order n at x (scalar or array)."""
    if theta <= 0:
        raise ValueError(f"scale must be positive, got {theta}")
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for k in range(n):
        prev, cur = cur, (x * cur - k * prev) / theta
    return cur if cur.ndim else float(cur)


def he_monic_eval(n: int, theta: float, x):
    """Monic variant: same zeros as he_eval, leading coefficient 1."""
    if theta <= 0:
        raise ValueError(f"scale must be positive, got {theta}")
    if n < 0:
        raise ValueError(f"order must be >= 0, got {n}")
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    for k in range(n):
        prev, cur = cur, x * cur - k * theta * prev
    return cur if cur.ndim else float(cur)


def _newton_step(n: int, x: np.ndarray) -> np.ndarray:
    """One Newton correction for roots of the unit-scale order-n polynomial.

    The recurrence pair is renormalized every step so orders up to a few
    hundred stay inside double range; the correction only needs the ratio
    value/derivative, which rescaling leaves untouched.
    """
    x = np.asarray(x, dtype=float)
    prev = np.zeros_like(x)
    cur = np.ones_like(x)
    scale_log = np.zeros_like(x)
    for k in range(n):
        prev, cur = cur, x * cur - k * prev
        m = np.maximum(np.abs(cur), np.abs(prev))
        m = np.where(m > 0, m, 1.0)
        cur = cur / m
        prev = prev / m
        scale_log += np.log(m)
    # derivative of order-n polynomial is n * (order n-1 polynomial)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(prev != 0, cur / (n * prev), 0.0)
    return x - delta


def he_roots(n: int) -> np.ndarray:
    """Strictly increasing zeros of the order-n polynomial at unit scale.

    Eigenvalues of the symmetric tridiagonal Jacobi matrix (zero diagonal,
    off-diagonal sqrt(k)), then a single Newton polish. Scale by sqrt(theta)
    for other scales.
    """
    if n < 1:
        raise ValueError(f"order must be >= 1, got {n}")
    if n == 1:
        return np.zeros(1)
    off = np.sqrt(np.arange(1, n, dtype=float))
    roots = eigh_tridiagonal(np.zeros(n), off, eigvals_only=True)
    roots = _newton_step(n, np.sort(roots))
    # zero is a root exactly when n is odd; pin it to avoid polish noise
    if n % 2 == 1:
        roots[n // 2] = 0.0
    return roots


@dataclass(frozen=True)
class AnisotropicBasis:
    """Gaussian weight data for a symmetric positive definite scale tensor."""

    Theta: np.ndarray

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.Theta, dtype=float))
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValueError("scale tensor must be square")
        if not np.allclose(T, T.T, rtol=1e-12, atol=1e-12):
            raise ValueError("scale tensor must be symmetric")
        try:
            np.linalg.cholesky(T)
        except np.linalg.LinAlgError:
            raise ValueError("scale tensor must be positive definite") from None
        object.__setattr__(self, "Theta", T)

    @property
    def D(self) -> int:
        return self.Theta.shape[0]

    @cached_property
    def ThetaInv(self) -> np.ndarray:
        return np.linalg.inv(self.Theta)

    @cached_property
    def chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.Theta)

    @cached_property
    def norm_const(self) -> float:
        """1 / sqrt(det(2 pi Theta))."""
        sign, logdet = np.linalg.slogdet(2.0 * np.pi * self.Theta)
        return float(np.exp(-0.5 * logdet))


def weight(basis: AnisotropicBasis, x) -> np.ndarray:
    """Normalized Gaussian weight at points x of shape (..., D)."""
    x = np.asarray(x, dtype=float)
    q = np.einsum("...i,ij,...j->...", x, basis.ThetaInv, x)
    return basis.norm_const * np.exp(-0.5 * q)


def ghe_table(basis: AnisotropicBasis, x, max_order: int) -> dict:
    """Values of every polynomial of order <= max_order at points x.

    Returns {multi-index: array of values}. Built by the raising recurrence
    on the first nonzero axis, reusing the cached X = ThetaInv @ x and all
    lower-order entries.
    """
    x = np.asarray(x, dtype=float)
    D = basis.D
    if x.shape[-1] != D:
        raise ValueError(f"points must have last axis {D}")
    X = x @ basis.ThetaInv  # symmetric, so no transpose needed
    Tinv = basis.ThetaInv
    table: dict = {(0,) * D: np.ones(x.shape[:-1])}
    if max_order == 0:
        return table
    frontier = [(0,) * D]
    for _ in range(max_order):
        nxt = []
        for beta in frontier:
            for i in range(D):
                target = tuple(b + (1 if j == i else 0) for j, b in enumerate(beta))
                if target in table:
                    continue
                # raise along the first nonzero axis of the target
                ax = next(j for j, t in enumerate(target) if t > 0)
                base = sub(target, unit(D, ax + 1))
                val = X[..., ax] * table[base]
                for j in range(D):
                    if base[j] == 0:
                        continue
                    lower = sub(base, unit(D, j + 1))
                    val = val - Tinv[ax, j] * base[j] * table[lower]
                table[target] = val
                nxt.append(target)
        frontier = nxt
    return table


def ghe_eval(alpha: Sequence[int], basis: AnisotropicBasis, x):
    """Anisotropic Hermite polynomial for multi-index alpha at points x."""
    alpha = tuple(int(a) for a in alpha)
    if is_void(alpha):
        return np.zeros(np.asarray(x, dtype=float).shape[:-1])
    table = ghe_table(basis, x, order(alpha))
    return table[alpha]


def ghf_eval(alpha: Sequence[int], basis: AnisotropicBasis, x):
    """Weighted basis function: weight times ghe_eval."""
    return weight(basis, x) * ghe_eval(alpha, basis, x)


def gauss_hermite_rule(npts: int):
    """1D nodes/weights integrating against the standard normal density."""
    t, w = hermgauss(npts)
    return t * math.sqrt(2.0), w / math.sqrt(math.pi)


def gaussian_quadrature(basis: AnisotropicBasis, npts: int):
    """Tensorized rule for the basis weight: points (K, D) and weights (K,)."""
    z, w = gauss_hermite_rule(npts)
    D = basis.D
    grids = np.meshgrid(*([z] * D), indexing="ij")
    wgrids = np.meshgrid(*([w] * D), indexing="ij")
    zs = np.stack([g.ravel() for g in grids], axis=-1)
    ws = np.ones(zs.shape[0])
    for wg in wgrids:
        ws *= wg.ravel()
    pts = zs @ basis.chol.T
    return pts, ws


def quasi_orthogonality_check(alpha, beta, basis: AnisotropicBasis, npts=None) -> float:
    """Quadrature value of the weighted product of two basis polynomials.

    Vanishes whenever the two orders differ; equals n! on the diagonal in 1D
    at unit scale.
    """
    alpha = tuple(int(a) for a in alpha)
    beta = tuple(int(b) for b in beta)
    deg = order(alpha) + order(beta)
    if npts is None:
        npts = max(order(alpha), order(beta)) + 4
    if 2 * npts - 1 < deg:
        npts = deg // 2 + 1
    pts, ws = gaussian_quadrature(basis, npts)
    table = ghe_table(basis, pts, max(order(alpha), order(beta)))
    return float(np.sum(ws * table[alpha] * table[beta]))


def integral_relation_check(alpha, beta, basis: AnisotropicBasis, shift=None, npts=None) -> float:
    """Quadrature value of the shifted weighted polynomial against a monomial.

    Integrates the order-|alpha| weighted basis function centered at the
    shift against x^beta; the shift drops out and the value is
    alpha! when beta == alpha, zero for any other beta of order <= |alpha|.
    """
    alpha = tuple(int(a) for a in alpha)
    beta = tuple(int(b) for b in beta)
    D = basis.D
    a = np.zeros(D) if shift is None else np.asarray(shift, dtype=float)
    if npts is None:
        npts = order(alpha) + order(beta) + 4
    pts, ws = gaussian_quadrature(basis, npts)
    shifted = pts + a  # integration variable; weight is centered at the shift
    mono = np.prod(shifted ** np.array(beta), axis=-1)
    he = ghe_eval(alpha, basis, pts)
    return float(np.sum(ws * he * mono))


def cross_order_root_distances(n_max: int):
    """Yield (m, n, root, distance) per order pair 1 <= m < n <= n_max.

    root is the nonzero zero of the order-n polynomial closest to any
    nonzero zero of the order-m polynomial; distance is that gap. Pairs
    where one order has no nonzero zeros (order 1) are skipped.
    """
    roots = {n: he_roots(n) for n in range(1, n_max + 1)}
    nonzero = {n: r[np.abs(r) > 1e-10] for n, r in roots.items()}
    for n in range(2, n_max + 1):
        rn = nonzero[n]
        if rn.size == 0:
            continue
        for m in range(1, n):
            rm = nonzero[m]
            if rm.size == 0:
                continue
            pos = np.searchsorted(rm, rn)
            best_d = np.inf
            best_r = rn[0]
            for j, r in enumerate(rn):
                for k in (pos[j] - 1, pos[j]):
                    if 0 <= k < rm.size:
                        d = abs(r - rm[k])
                        if d < best_d:
                            best_d = d
                            best_r = r
            yield m, n, float(best_r), float(best_d)


def common_zero_scan(n_max: int, tol: float = 1e-9):
    """Pairs of orders sharing a nonzero zero within relative tolerance.

    Expected empty; any hit is returned as (m, n, root, distance).
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    out = []
    for m, n, r, d in cross_order_root_distances(n_max):
        if d <= tol * max(1.0, abs(r)):
            out.append((m, n, r, d))
    return out
