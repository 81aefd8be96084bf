"""Foundational numerical kernels: standard-normal CDF and its inverse,
classical RK4, discrete/continuous Riccati solvers, and zero-order-hold
discretization. Everything here operates on small dense arrays (<= 8x8).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
import scipy.linalg

from . import _kernels


class SolverError(RuntimeError):
    """Riccati iteration failed to converge; carries the last residual."""


class IntegrationError(RuntimeError):
    """A derivative or state went non-finite; carries the offending time."""


def std_normal_cdf(z: float) -> float:
    """One-sided standard normal CDF, Phi(0) = 1/2.

    Absolute accuracy is that of the C library erfc (far tighter than the
    1e-7 contract). Raises ValueError on non-finite input.
    """
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"std_normal_cdf: non-finite argument {z!r}")
    return _kernels.std_normal_cdf(z)


def std_normal_cdf_inv(p: float) -> float:
    """Inverse of std_normal_cdf on (0, 1), by bisection on the forward CDF.

    The bracket [-40, 40] covers every representable p; bisection runs to
    an interval width of 1e-13, well inside the 1e-6 roundtrip contract.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ValueError(f"std_normal_cdf_inv: p must lie in (0, 1), got {p!r}")
    if p == 0.5:
        return 0.0
    lo, hi = -40.0, 40.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if _kernels.std_normal_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rk4_step(
    derivative: Callable[[float, np.ndarray], np.ndarray],
    state: np.ndarray,
    t: float,
    dt: float,
) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of a generic ODE."""
    if dt <= 0.0:
        raise ValueError(f"rk4_step: dt must be positive, got {dt!r}")
    x = np.asarray(state, dtype=float)
    k1 = np.asarray(derivative(t, x), dtype=float)
    k2 = np.asarray(derivative(t + 0.5 * dt, x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(derivative(t + 0.5 * dt, x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(derivative(t + dt, x + dt * k3), dtype=float)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite derivative encountered at t={t!r}")
    return out


def solve_dare(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Discrete algebraic Riccati equation solved by fixed-point iteration.

    Iterates P <- A'PA - A'PB (R + B'PB)^-1 B'PA + Q from P0 = Q until the
    step-to-step change drops below ``tol``, then verifies the residual is
    below 1e-8 (SolverError otherwise).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    p = q.copy()
    res = np.inf
    for _ in range(max_iter):
        bpb = r + b.T @ p @ b
        apb = a.T @ p @ b
        p_next = a.T @ p @ a - apb @ np.linalg.solve(bpb, apb.T) + q
        p_next = 0.5 * (p_next + p_next.T)
        step = np.max(np.abs(p_next - p))
        p = p_next
        if step < tol:
            # small steps do not imply a small residual when the
            # contraction is slow; keep iterating until it actually is
            res = _dare_residual(a, b, q, r, p)
            if res < 1e-8:
                return p
    raise SolverError(f"DARE iteration did not converge: residual {res:.3e}")


def _dare_residual(a, b, q, r, p) -> float:
    bpb = r + b.T @ p @ b
    apb = a.T @ p @ b
    return float(np.max(np.abs(a.T @ p @ a - apb @ np.linalg.solve(bpb, apb.T) + q - p)))


def solve_care(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time LQR: returns (K, P) with K = R^-1 B'P.

    Newton-Kleinman iteration on the continuous Riccati equation, seeded
    with a stabilizing gain from the shifted-Lyapunov construction. Each
    iterate solves a Lyapunov equation by Kronecker vectorization.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))

    k = _stabilizing_seed_gain(a, b)
    p = np.zeros_like(q)
    for _ in range(60):
        acl = a - b @ k
        rhs = q + k.T @ r @ k
        p_next = _solve_lyapunov(acl, rhs)
        k_next = np.linalg.solve(r, b.T @ p_next)
        if np.max(np.abs(p_next - p)) < 1e-13:
            p = p_next
            k = k_next
            break
        p = p_next
        k = k_next
    res = float(np.max(np.abs(a.T @ p + p @ a - p @ b @ np.linalg.solve(r, b.T @ p) + q)))
    if res >= 1e-8:
        raise SolverError(f"CARE Newton-Kleinman did not converge: residual {res:.3e}")
    return k, 0.5 * (p + p.T)


def solve_care_gain(a, b, q, r) -> np.ndarray:
    """LQR gain K of the continuous-time problem (see solve_care)."""
    return solve_care(a, b, q, r)[0]


def _solve_lyapunov(acl: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # acl' P + P acl = -rhs, vectorized column-major.
    n = acl.shape[0]
    eye = np.eye(n)
    m = np.kron(eye, acl.T) + np.kron(acl.T, eye)
    p = np.linalg.solve(m, -rhs.flatten(order="F")).reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def _stabilizing_seed_gain(a, b) -> np.ndarray:
    # Bass' construction: with beta exceeding the spectral abscissa of -A,
    # -(A + beta I) is Hurwitz; solving (A + beta I) X + X (A + beta I)' =
    # 2 B B' gives X > 0 for controllable (A, B) and K0 = B' X^-1
    # stabilizes A - B K0. An already-stable A falls back to K0 = 0.
    if np.max(np.linalg.eigvals(a).real) < 0.0:
        return np.zeros((b.shape[1], a.shape[0]))
    beta = float(np.linalg.norm(a, "fro")) + 1.0
    shifted = -(a + beta * np.eye(a.shape[0]))
    x = _solve_lyapunov(shifted.T, 2.0 * b @ b.T)
    k = np.linalg.solve(x, b).T
    if np.max(np.linalg.eigvals(a - b @ k).real) >= 0.0:
        raise SolverError("could not construct a stabilizing seed gain for the CARE")
    return k


def discretize_zoh(a: np.ndarray, b: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization via the block-matrix exponential.

    exp(dt * [[A, B], [0, 0]]) = [[Ad, Bd], [0, I]] with Ad = exp(A dt) and
    Bd the integrated input coupling.
    """
    if dt <= 0.0:
        raise ValueError(f"discretize_zoh: dt must be positive, got {dt!r}")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = a.shape[0]
    m = b.shape[1]
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = a
    blk[:n, n:] = b
    exp_blk = scipy.linalg.expm(blk * dt)
    return exp_blk[:n, :n], exp_blk[:n, n:]
