"""Pure-Python reference backend for the hot simulation kernels.

Used when the compiled extension is unavailable or when MMSAFE_PURE_PY is
set. Must stay numerically interchangeable with ``mmsafe._kernels._fast``;
tests/test_kernels_parity.py enforces agreement on random inputs.

State layouts (fixed throughout the package):
    robot  xr = [r_x, r_y, v_r, psi_r]
    human  xh = [h_x, v_x, h_y, v_y]
    joint  x  = [xr; xh]  (8,)
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"

_SQRT1_2 = 0.7071067811865476


def std_normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z * _SQRT1_2)


def phi_terms(xr, xh, k_phi: float):
    """Distance geometry of the safety index at one joint state.

    Returns (d, ddot, grad_r, grad_h) where grad_r/grad_h are the rows
    d(phi)/d(xr) and d(phi)/d(xh) of phi = d_min^2 - d^2 - k_phi*ddot
    (the d_min^2 constant contributes nothing to either gradient).
    d == 0 is the caller's degenerate case; gradients are then NaN-free
    garbage and must not be used.
    """
    dpx = xr[0] - xh[0]
    dpy = xr[1] - xh[2]
    d = math.hypot(dpx, dpy)
    c = math.cos(xr[3])
    s = math.sin(xr[3])
    vr = xr[2]
    dvx = vr * c - xh[1]
    dvy = vr * s - xh[3]
    if d == 0.0:
        return 0.0, 0.0, np.zeros(4), np.zeros(4)
    pd = dpx * dvx + dpy * dvy
    ddot = pd / d
    inv_d = 1.0 / d
    pd_d3 = pd / (d * d * d)

    grad_h = np.empty(4)
    grad_h[0] = 2.0 * dpx + k_phi * (dvx * inv_d - pd_d3 * dpx)
    grad_h[1] = k_phi * dpx * inv_d
    grad_h[2] = 2.0 * dpy + k_phi * (dvy * inv_d - pd_d3 * dpy)
    grad_h[3] = k_phi * dpy * inv_d

    grad_r = np.empty(4)
    grad_r[0] = -2.0 * dpx - k_phi * (dvx * inv_d - pd_d3 * dpx)
    grad_r[1] = -2.0 * dpy - k_phi * (dvy * inv_d - pd_d3 * dpy)
    grad_r[2] = -k_phi * (dpx * c + dpy * s) * inv_d
    grad_r[3] = -k_phi * vr * (-dpx * s + dpy * c) * inv_d
    return d, ddot, grad_r, grad_h


def human_control(xh, xr, theta, gain, gamma_rep: float, d_floor: float):
    """LQR pull toward the goal plus inverse-square repulsion from the robot.

    The repulsion distance is clamped at d_floor to keep the 1/d^2 term
    finite at near-coincident positions.
    """
    ex0 = xh[0] - theta[0]
    ex1 = xh[1] - theta[1]
    ex2 = xh[2] - theta[2]
    ex3 = xh[3] - theta[3]
    rx = xh[0] - xr[0]
    ry = xh[2] - xr[1]
    d = math.hypot(rx, ry)
    if d < d_floor:
        d = d_floor
    rep = gamma_rep / (d * d)
    u = np.empty(2)
    u[0] = -(gain[0, 0] * ex0 + gain[0, 1] * ex1 + gain[0, 2] * ex2 + gain[0, 3] * ex3) + rep * rx
    u[1] = -(gain[1, 0] * ex0 + gain[1, 1] * ex1 + gain[1, 2] * ex2 + gain[1, 3] * ex3) + rep * ry
    return u


def joint_mean_deriv(x, ur, theta, gain, gamma_rep: float, d_floor: float):
    """Mean drift of the joint system: unicycle robot over LTI human."""
    uh = human_control(x[4:], x[:4], theta, gain, gamma_rep, d_floor)
    dx = np.empty(8)
    dx[0] = x[2] * math.cos(x[3])
    dx[1] = x[2] * math.sin(x[3])
    dx[2] = ur[0]
    dx[3] = ur[1]
    dx[4] = x[5]
    dx[5] = uh[0]
    dx[6] = x[7]
    dx[7] = uh[1]
    return dx


def rk4_joint_mean(x, ur, theta, gain, gamma_rep: float, d_floor: float, dt: float):
    """One classical RK4 step of joint_mean_deriv with ur held constant."""
    k1 = joint_mean_deriv(x, ur, theta, gain, gamma_rep, d_floor)
    k2 = joint_mean_deriv(x + 0.5 * dt * k1, ur, theta, gain, gamma_rep, d_floor)
    k3 = joint_mean_deriv(x + 0.5 * dt * k2, ur, theta, gain, gamma_rep, d_floor)
    k4 = joint_mean_deriv(x + dt * k3, ur, theta, gain, gamma_rep, d_floor)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def halfspace_box_polygon(l0: float, l1: float, s: float, u_max: float):
    """Clip {u : l.u <= s} against the box [-u_max, u_max]^2.

    Returns the vertices of the intersection as an (n, 2) array in CCW
    order (n <= 5); n == 0 means the intersection is empty. l == 0 is the
    vacuous (s >= 0: whole box) or infeasible (s < 0: empty) marker.
    """
    m = u_max
    box = ((-m, -m), (m, -m), (m, m), (-m, m))
    if l0 == 0.0 and l1 == 0.0:
        if s >= 0.0:
            return np.array(box, dtype=float)
        return np.empty((0, 2))
    out = []
    for i in range(4):
        ax, ay = box[i]
        bx, by = box[(i + 1) % 4]
        fa = l0 * ax + l1 * ay - s
        fb = l0 * bx + l1 * by - s
        if fa <= 0.0:
            out.append((ax, ay))
        if (fa < 0.0 < fb) or (fb < 0.0 < fa):
            t = fa / (fa - fb)
            out.append((ax + t * (bx - ax), ay + t * (by - ay)))
    if not out:
        return np.empty((0, 2))
    return np.array(out, dtype=float)


def project_to_polygon(px: float, py: float, poly):
    """Closest point of a convex polygon (by vertex list) to (px, py).

    The caller is expected to have handled the interior case already;
    this searches edges (and degenerate 1- or 2-vertex polygons).
    """
    n = poly.shape[0]
    if n == 1:
        return float(poly[0, 0]), float(poly[0, 1])
    best = math.inf
    bx = by = 0.0
    for i in range(n):
        ax, ay = poly[i, 0], poly[i, 1]
        cx, cy = poly[(i + 1) % n, 0], poly[(i + 1) % n, 1]
        ex, ey = cx - ax, cy - ay
        ee = ex * ex + ey * ey
        if ee == 0.0:
            t = 0.0
        else:
            t = ((px - ax) * ex + (py - ay) * ey) / ee
            t = min(1.0, max(0.0, t))
        qx, qy = ax + t * ex, ay + t * ey
        dist = (px - qx) ** 2 + (py - qy) ** 2
        if dist < best:
            best = dist
            bx, by = qx, qy
    return bx, by


def polygon_area(poly) -> float:
    """Shoelace area of a simple polygon given by its vertex list."""
    n = poly.shape[0]
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    return 0.5 * abs(acc)
