"""Compiled inner loops of the finite-volume stepper.

All kernels work on 2-D arrays of shape (n0, n1); 1-D problems are passed as
(n, 1) views with unit spacing on the dummy axis, which has no interior faces.
The coefficient vector is ``ModelParams.as_coefficients()``.
"""

import math

import numpy as np
from numba import njit

EPS = np.finfo(np.float64).eps

# status codes returned by advance()
OK = 0
REJECTED = 1
NONFINITE = 2

MAX_HALVINGS = 10


@njit(cache=True)
def sat(phi, coef):
    delta = coef[4]
    if coef[7] == 0.0:
        return delta + phi * (1.0 - phi)
    phi_min = coef[5]
    phi_th = coef[6]
    w = (phi - phi_min) * (phi_th - phi)
    if w < 0.0:
        w = 0.0
    return delta + 4.0 * w / ((phi_th - phi_min) * (phi_th - phi_min))


@njit(cache=True)
def face_flux(psi_l, psi_r, phi_l, phi_r, h, coef):
    alpha = coef[0]
    D = coef[1]
    s = sat(0.5 * (phi_l + phi_r), coef)
    drift = alpha * s * (phi_r - phi_l) / h
    donor = psi_l if drift > 0.0 else psi_r
    return drift * donor - 0.5 * D * s * (psi_r * psi_r - psi_l * psi_l) / h


@njit(cache=True)
def fluxes(psi, phi, h0, h1, coef, fx, fy):
    n0, n1 = psi.shape
    for i in range(n0 - 1):
        for j in range(n1):
            fx[i, j] = face_flux(psi[i, j], psi[i + 1, j], phi[i, j], phi[i + 1, j], h0, coef)
    for i in range(n0):
        for j in range(n1 - 1):
            fy[i, j] = face_flux(psi[i, j], psi[i, j + 1], phi[i, j], phi[i, j + 1], h1, coef)


@njit(cache=True)
def _face_dt(psi_l, psi_r, phi_l, phi_r, h, dim, coef):
    alpha = coef[0]
    D = coef[1]
    s = sat(0.5 * (phi_l + phi_r), coef)
    grad = (phi_r - phi_l) / h
    pmax = max(max(psi_l, psi_r), EPS)
    den = 2.0 * dim * D * s * pmax + h * abs(alpha * s * grad) + EPS
    return h * h / den


@njit(cache=True)
def stable_dt(psi, phi, h0, h1, dim, coef, safety, max_dt):
    n0, n1 = psi.shape
    best = np.inf
    for i in range(n0 - 1):
        for j in range(n1):
            c = _face_dt(psi[i, j], psi[i + 1, j], phi[i, j], phi[i + 1, j], h0, dim, coef)
            if c < best:
                best = c
    for i in range(n0):
        for j in range(n1 - 1):
            c = _face_dt(psi[i, j], psi[i, j + 1], phi[i, j], phi[i, j + 1], h1, dim, coef)
            if c < best:
                best = c
    dt = safety * best
    R0 = coef[2]
    if R0 > 0.0:
        pinf = 0.0
        for i in range(n0):
            for j in range(n1):
                if abs(psi[i, j]) > pinf:
                    pinf = abs(psi[i, j])
        dt = min(dt, safety / (R0 * max(1.0, pinf)))
    return min(dt, max_dt)


@njit(cache=True)
def try_step(psi, phi, dt, h0, h1, coef, tol, fx, fy, psi_out, phi_out):
    """One explicit step. Returns the number of floored cells, or -1 if rejected, -2 if non-finite."""
    R0 = coef[2]
    gamma = coef[3]
    n0, n1 = psi.shape
    fluxes(psi, phi, h0, h1, coef, fx, fy)
    floored = 0
    for i in range(n0):
        for j in range(n1):
            out = 0.0
            if i < n0 - 1:
                out += fx[i, j] / h0
            if i > 0:
                out -= fx[i - 1, j] / h0
            if j < n1 - 1:
                out += fy[i, j] / h1
            if j > 0:
                out -= fy[i, j - 1] / h1
            p = psi[i, j]
            v = p - dt * out + dt * p * R0 * (1.0 - phi[i, j] - p)
            if not math.isfinite(v):
                return -2
            if v < 0.0:
                if v < -tol:
                    return -1
                v = 0.0
                floored += 1
            psi_out[i, j] = v
            phi_out[i, j] = phi[i, j] * math.exp(-gamma * dt * p)
    return floored


@njit(cache=True)
def advance(psi, phi, t, t_stop, max_steps, h0, h1, dim, coef, safety, max_dt, tol, fx, fy, psi_w, phi_w):
    """Step (psi, phi) in place until ``t_stop`` or ``max_steps`` accepted steps.

    Returns (t, steps, floored, status, min_psi, max_phi_increase, halvings).
    """
    steps = 0
    floored = 0
    halvings = 0
    min_psi = np.inf
    max_inc = -np.inf
    n0, n1 = psi.shape
    while t < t_stop and steps < max_steps:
        dt = stable_dt(psi, phi, h0, h1, dim, coef, safety, max_dt)
        if not math.isfinite(dt) or dt <= 0.0:
            return t, steps, floored, NONFINITE, min_psi, max_inc, halvings
        last = False
        if dt >= t_stop - t:
            dt = t_stop - t
            last = True
        k = 0
        while True:
            res = try_step(psi, phi, dt, h0, h1, coef, tol, fx, fy, psi_w, phi_w)
            if res >= 0:
                break
            if res == -2:
                return t, steps, floored, NONFINITE, min_psi, max_inc, halvings
            k += 1
            if k > MAX_HALVINGS:
                return t, steps, floored, REJECTED, min_psi, max_inc, halvings
            dt *= 0.5
            last = False
        halvings += k
        floored += res
        for i in range(n0):
            for j in range(n1):
                inc = phi_w[i, j] - phi[i, j]
                if inc > max_inc:
                    max_inc = inc
                psi[i, j] = psi_w[i, j]
                phi[i, j] = phi_w[i, j]
                if psi_w[i, j] < min_psi:
                    min_psi = psi_w[i, j]
        t = t_stop if last else t + dt
        steps += 1
    return t, steps, floored, OK, min_psi, max_inc, halvings
