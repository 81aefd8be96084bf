# Compiled backend for the hot simulation kernels. Semantics must match
# mmsafe._kernels._ref exactly; see that module for the contracts.

from libc.math cimport cos, erfc, fabs, hypot, sin, INFINITY

import numpy as np

NAME = "cython"

cdef double SQRT1_2 = 0.7071067811865476


def std_normal_cdf(double z):
    return 0.5 * erfc(-z * SQRT1_2)


def phi_terms(double[::1] xr, double[::1] xh, double k_phi):
    cdef double dpx = xr[0] - xh[0]
    cdef double dpy = xr[1] - xh[2]
    cdef double d = hypot(dpx, dpy)
    cdef double c = cos(xr[3])
    cdef double s = sin(xr[3])
    cdef double vr = xr[2]
    cdef double dvx = vr * c - xh[1]
    cdef double dvy = vr * s - xh[3]
    grad_r = np.zeros(4)
    grad_h = np.zeros(4)
    cdef double[::1] gr = grad_r
    cdef double[::1] gh = grad_h
    if d == 0.0:
        return 0.0, 0.0, grad_r, grad_h
    cdef double pd = dpx * dvx + dpy * dvy
    cdef double ddot = pd / d
    cdef double inv_d = 1.0 / d
    cdef double pd_d3 = pd / (d * d * d)

    gh[0] = 2.0 * dpx + k_phi * (dvx * inv_d - pd_d3 * dpx)
    gh[1] = k_phi * dpx * inv_d
    gh[2] = 2.0 * dpy + k_phi * (dvy * inv_d - pd_d3 * dpy)
    gh[3] = k_phi * dpy * inv_d

    gr[0] = -2.0 * dpx - k_phi * (dvx * inv_d - pd_d3 * dpx)
    gr[1] = -2.0 * dpy - k_phi * (dvy * inv_d - pd_d3 * dpy)
    gr[2] = -k_phi * (dpx * c + dpy * s) * inv_d
    gr[3] = -k_phi * vr * (-dpx * s + dpy * c) * inv_d
    return d, ddot, grad_r, grad_h


cdef void _human_control(double* xh, double* xr, double* theta,
                         double[:, ::1] gain, double gamma_rep,
                         double d_floor, double* u) noexcept nogil:
    cdef double ex0 = xh[0] - theta[0]
    cdef double ex1 = xh[1] - theta[1]
    cdef double ex2 = xh[2] - theta[2]
    cdef double ex3 = xh[3] - theta[3]
    cdef double rx = xh[0] - xr[0]
    cdef double ry = xh[2] - xr[1]
    cdef double d = hypot(rx, ry)
    cdef double rep
    if d < d_floor:
        d = d_floor
    rep = gamma_rep / (d * d)
    u[0] = -(gain[0, 0] * ex0 + gain[0, 1] * ex1 + gain[0, 2] * ex2 + gain[0, 3] * ex3) + rep * rx
    u[1] = -(gain[1, 0] * ex0 + gain[1, 1] * ex1 + gain[1, 2] * ex2 + gain[1, 3] * ex3) + rep * ry


def human_control(double[::1] xh, double[::1] xr, double[::1] theta,
                  double[:, ::1] gain, double gamma_rep, double d_floor):
    out = np.empty(2)
    cdef double[::1] o = out
    _human_control(&xh[0], &xr[0], &theta[0], gain, gamma_rep, d_floor, &o[0])
    return out


cdef void _joint_mean_deriv(double* x, double* ur, double* theta,
                            double[:, ::1] gain, double gamma_rep,
                            double d_floor, double* dx) noexcept nogil:
    cdef double u[2]
    _human_control(x + 4, x, theta, gain, gamma_rep, d_floor, u)
    dx[0] = x[2] * cos(x[3])
    dx[1] = x[2] * sin(x[3])
    dx[2] = ur[0]
    dx[3] = ur[1]
    dx[4] = x[5]
    dx[5] = u[0]
    dx[6] = x[7]
    dx[7] = u[1]


def joint_mean_deriv(double[::1] x, double[::1] ur, double[::1] theta,
                     double[:, ::1] gain, double gamma_rep, double d_floor):
    out = np.empty(8)
    cdef double[::1] o = out
    _joint_mean_deriv(&x[0], &ur[0], &theta[0], gain, gamma_rep, d_floor, &o[0])
    return out


def rk4_joint_mean(double[::1] x, double[::1] ur, double[::1] theta,
                   double[:, ::1] gain, double gamma_rep, double d_floor,
                   double dt):
    cdef double k1[8]
    cdef double k2[8]
    cdef double k3[8]
    cdef double k4[8]
    cdef double tmp[8]
    cdef int i
    out = np.empty(8)
    cdef double[::1] o = out

    _joint_mean_deriv(&x[0], &ur[0], &theta[0], gain, gamma_rep, d_floor, k1)
    for i in range(8):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _joint_mean_deriv(tmp, &ur[0], &theta[0], gain, gamma_rep, d_floor, k2)
    for i in range(8):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _joint_mean_deriv(tmp, &ur[0], &theta[0], gain, gamma_rep, d_floor, k3)
    for i in range(8):
        tmp[i] = x[i] + dt * k3[i]
    _joint_mean_deriv(tmp, &ur[0], &theta[0], gain, gamma_rep, d_floor, k4)
    for i in range(8):
        o[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    return out


def halfspace_box_polygon(double l0, double l1, double s, double u_max):
    cdef double m = u_max
    cdef double bx[4]
    cdef double by[4]
    cdef double vx[8]
    cdef double vy[8]
    cdef double fa, fb, t, ax, ay, cx, cy
    cdef int i, j, n = 0
    bx[0] = -m; by[0] = -m
    bx[1] = m; by[1] = -m
    bx[2] = m; by[2] = m
    bx[3] = -m; by[3] = m
    if l0 == 0.0 and l1 == 0.0:
        if s >= 0.0:
            out = np.empty((4, 2))
            for i in range(4):
                out[i, 0] = bx[i]
                out[i, 1] = by[i]
            return out
        return np.empty((0, 2))
    for i in range(4):
        j = (i + 1) % 4
        ax = bx[i]; ay = by[i]
        cx = bx[j]; cy = by[j]
        fa = l0 * ax + l1 * ay - s
        fb = l0 * cx + l1 * cy - s
        if fa <= 0.0:
            vx[n] = ax; vy[n] = ay; n += 1
        if (fa < 0.0 < fb) or (fb < 0.0 < fa):
            t = fa / (fa - fb)
            vx[n] = ax + t * (cx - ax); vy[n] = ay + t * (cy - ay); n += 1
    out = np.empty((n, 2))
    for i in range(n):
        out[i, 0] = vx[i]
        out[i, 1] = vy[i]
    return out


def project_to_polygon(double px, double py, double[:, ::1] poly):
    cdef int n = poly.shape[0]
    cdef int i, j
    cdef double ax, ay, ex, ey, ee, t, qx, qy, dist
    cdef double best = INFINITY
    cdef double ox = 0.0, oy = 0.0
    if n == 1:
        return poly[0, 0], poly[0, 1]
    for i in range(n):
        j = (i + 1) % n
        ax = poly[i, 0]; ay = poly[i, 1]
        ex = poly[j, 0] - ax; ey = poly[j, 1] - ay
        ee = ex * ex + ey * ey
        if ee == 0.0:
            t = 0.0
        else:
            t = ((px - ax) * ex + (py - ay) * ey) / ee
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        qx = ax + t * ex; qy = ay + t * ey
        dist = (px - qx) * (px - qx) + (py - qy) * (py - qy)
        if dist < best:
            best = dist
            ox = qx; oy = qy
    return ox, oy


def polygon_area(double[:, ::1] poly):
    cdef int n = poly.shape[0]
    cdef int i, j
    cdef double acc = 0.0
    if n < 3:
        return 0.0
    for i in range(n):
        j = (i + 1) % n
        acc += poly[i, 0] * poly[j, 1] - poly[j, 0] * poly[i, 1]
    return 0.5 * fabs(acc)
