"""Exact Riemann solver for the 1D Euler equations with a perfect-gas law.

Independent oracle for the order-2 moment solver: in one dimension the
closure at M=2 is the monatomic gas, adiabatic exponent 3. States are
(rho, u, p) triples. Star-region pressure is found by Newton iteration on
the standard two-wave pressure function; sampling follows the usual
similarity-variable case split.
"""

from __future__ import annotations

import math

import numpy as np

GAMMA = 3.0


class VacuumError(ValueError):
    """Data admits a vacuum region; the two-wave solution does not exist."""


def sound_speed(rho, p, gamma=GAMMA):
    return math.sqrt(gamma * p / rho)


def _wave_fn(p, rho_k, p_k, gamma):
    """Velocity change across the wave connecting to state k at pressure p,
    and its derivative in p."""
    a_k = sound_speed(rho_k, p_k, gamma)
    if p > p_k:
        # shock branch
        A = 2.0 / ((gamma + 1.0) * rho_k)
        B = (gamma - 1.0) / (gamma + 1.0) * p_k
        root = math.sqrt(A / (p + B))
        f = (p - p_k) * root
        df = root * (1.0 - 0.5 * (p - p_k) / (p + B))
        return f, df
    # rarefaction branch
    ex = (gamma - 1.0) / (2.0 * gamma)
    f = 2.0 * a_k / (gamma - 1.0) * ((p / p_k) ** ex - 1.0)
    df = (p / p_k) ** (-(gamma + 1.0) / (2.0 * gamma)) / (rho_k * a_k)
    return f, df


def star_region(left, right, gamma=GAMMA):
    """Pressure and velocity between the two waves.

    left, right: (rho, u, p). Raises VacuumError when the data pulls apart
    faster than the rarefactions can fill.
    """
    rho_l, u_l, p_l = left
    rho_r, u_r, p_r = right
    a_l = sound_speed(rho_l, p_l, gamma)
    a_r = sound_speed(rho_r, p_r, gamma)
    if 2.0 * (a_l + a_r) / (gamma - 1.0) <= u_r - u_l:
        raise VacuumError("initial states generate vacuum")

    # two-rarefaction guess keeps the iterate positive for any data
    ex = (gamma - 1.0) / (2.0 * gamma)
    num = a_l + a_r - 0.5 * (gamma - 1.0) * (u_r - u_l)
    den = a_l / p_l**ex + a_r / p_r**ex
    p = max((num / den) ** (1.0 / ex), 1e-14 * min(p_l, p_r))

    for _ in range(100):
        f_l, df_l = _wave_fn(p, rho_l, p_l, gamma)
        f_r, df_r = _wave_fn(p, rho_r, p_r, gamma)
        g = f_l + f_r + (u_r - u_l)
        step = g / (df_l + df_r)
        p_new = p - step
        if p_new <= 0.0:
            p_new = 0.5 * p
        if abs(p_new - p) <= 1e-15 * (p_new + p):
            p = p_new
            break
        p = p_new
    f_l, _ = _wave_fn(p, rho_l, p_l, gamma)
    f_r, _ = _wave_fn(p, rho_r, p_r, gamma)
    u = 0.5 * (u_l + u_r) + 0.5 * (f_r - f_l)
    return p, u


def _sample_side(xi, rho_k, u_k, p_k, p_star, u_star, sign, gamma):
    """State at similarity coordinate xi on one side of the contact.

    sign = -1 for the left wave, +1 for the right; xi already satisfies
    sign*(xi - u_star) >= 0.
    """
    a_k = sound_speed(rho_k, p_k, gamma)
    gp = gamma + 1.0
    gm = gamma - 1.0
    if p_star > p_k:
        # shock
        ratio = p_star / p_k
        s = u_k + sign * a_k * math.sqrt(0.5 * gp / gamma * ratio + 0.5 * gm / gamma)
        if sign * (xi - s) >= 0.0:
            return rho_k, u_k, p_k
        rho = rho_k * (ratio + gm / gp) / (gm / gp * ratio + 1.0)
        return rho, u_star, p_star
    # rarefaction
    head = u_k + sign * a_k
    a_star = a_k * (p_star / p_k) ** (gm / (2.0 * gamma))
    tail = u_star + sign * a_star
    if sign * (xi - head) >= 0.0:
        return rho_k, u_k, p_k
    if sign * (xi - tail) <= 0.0:
        rho = rho_k * (p_star / p_k) ** (1.0 / gamma)
        return rho, u_star, p_star
    # inside the fan: xi = u + sign*a on the spanning characteristic
    a = 2.0 / gp * (a_k + sign * 0.5 * gm * (xi - u_k))
    u = xi - sign * a
    rho = rho_k * (a / a_k) ** (2.0 / gm)
    p = p_k * (a / a_k) ** (2.0 * gamma / gm)
    return rho, u, p


def sample(xi, left, right, gamma=GAMMA):
    """(rho, u, p) at x/t = xi for the Riemann problem left|right."""
    p_star, u_star = star_region(left, right, gamma)
    if xi <= u_star:
        rho_k, u_k, p_k = left
        return _sample_side(xi, rho_k, u_k, p_k, p_star, u_star, -1.0, gamma)
    rho_k, u_k, p_k = right
    return _sample_side(xi, rho_k, u_k, p_k, p_star, u_star, +1.0, gamma)


def profile(x, t, left, right, x0=0.0, gamma=GAMMA):
    """Arrays (rho, u, p) over positions x at time t > 0."""
    x = np.asarray(x, dtype=float)
    rho = np.empty_like(x)
    u = np.empty_like(x)
    p = np.empty_like(x)
    for k, xk in enumerate(x.ravel()):
        rho.flat[k], u.flat[k], p.flat[k] = sample((xk - x0) / t, left, right, gamma)
    return rho, u, p
