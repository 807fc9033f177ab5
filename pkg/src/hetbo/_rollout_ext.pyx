# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched rollout-cost kernel.

Same contract as ``hetbo._rollout_py.rollout_costs``; loops over rollouts
and horizon in C instead of vectorising across rollouts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, isfinite

cnp.import_array()

DEF MAXDIM = 4


cdef inline void _pendulum(const double* p, const double* s, double a, double* out) noexcept nogil:
    cdef double m = p[0], l = p[1], g = p[2], b = p[3]
    cdef double inertia = m * l * l / 3.0
    out[0] = s[1]
    out[1] = (0.5 * m * g * l * sin(s[0]) + a - b * s[1]) / inertia


cdef inline void _cartpole(const double* p, const double* s, double a, double* out) noexcept nogil:
    cdef double mc = p[0], mp = p[1], length = p[2], g = p[3]
    cdef double half = 0.5 * length
    cdef double total = mc + mp
    cdef double sn = sin(s[2]), cs = cos(s[2])
    cdef double tmp = (a + mp * half * s[3] * s[3] * sn) / total
    cdef double thdd = (g * sn - cs * tmp) / (half * (4.0 / 3.0 - mp * cs * cs / total))
    out[0] = s[1]
    out[1] = tmp - mp * half * thdd * cs / total
    out[2] = s[3]
    out[3] = thdd


cdef inline void _acrobot(const double* p, const double* s, double a, double* out) noexcept nogil:
    cdef double m1 = p[0], m2 = p[1], l1 = p[2], lc1 = p[3], lc2 = p[4]
    cdef double i1 = p[5], i2 = p[6], g = p[7]
    cdef double th1 = s[0], th2 = s[1], w1 = s[2], w2 = s[3]
    cdef double cos2 = cos(th2), sin2 = sin(th2)
    cdef double d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * cos2) + i1 + i2
    cdef double d2 = m2 * (lc2 * lc2 + l1 * lc2 * cos2) + i2
    cdef double phi2 = m2 * lc2 * g * sin(th1 + th2)
    cdef double phi1 = (-m2 * l1 * lc2 * w2 * w2 * sin2
                        - 2.0 * m2 * l1 * lc2 * w2 * w1 * sin2
                        + (m1 * lc1 + m2 * l1) * g * sin(th1)
                        + phi2)
    cdef double dd2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * w1 * w1 * sin2 - phi2) / (
        m2 * lc2 * lc2 + i2 - d2 * d2 / d1)
    out[0] = w1
    out[1] = w2
    out[2] = -(d2 * dd2 + phi1) / d1
    out[3] = dd2


cdef inline void _deriv(int pid, const double* p, const double* s, double a, double* out) noexcept nogil:
    if pid == 0:
        _pendulum(p, s, a, out)
    elif pid == 1:
        _cartpole(p, s, a, out)
    else:
        _acrobot(p, s, a, out)


cdef inline double _reward(int pid, const double* s) noexcept nogil:
    cdef double c
    if pid == 0:
        c = cos(s[0]) - 1.0
        return -(50.0 * c * c + s[1] * s[1]) + 4000.0
    elif pid == 1:
        c = sin(s[2])
        return -(s[0] * s[0] + 500.0 * c * c + s[1] * s[1] + s[3] * s[3])
    return cos(s[0]) - cos(s[0] + s[1])


def rollout_costs(int plant_id, params, double dt, double action_low,
                  double action_high, double reward_upper, double penalty,
                  s0, controls):
    cdef const double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[::1] start = np.ascontiguousarray(s0, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(controls, dtype=np.float64)
    cdef Py_ssize_t m = u.shape[0], horizon = u.shape[1], n = start.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] total = out
    cdef double s[MAXDIM]
    cdef double tmp[MAXDIM]
    cdef double k1[MAXDIM]
    cdef double k2[MAXDIM]
    cdef double k3[MAXDIM]
    cdef double k4[MAXDIM]
    cdef Py_ssize_t j, t, d
    cdef double a, acc, h = dt

    if n > MAXDIM:
        raise ValueError("state dimension too large")
    with nogil:
        for j in range(m):
            for d in range(n):
                s[d] = start[d]
            acc = 0.0
            for t in range(horizon):
                a = u[j, t]
                if a < action_low:
                    a = action_low
                elif a > action_high:
                    a = action_high
                _deriv(plant_id, &p[0], s, a, k1)
                for d in range(n):
                    tmp[d] = s[d] + 0.5 * h * k1[d]
                _deriv(plant_id, &p[0], tmp, a, k2)
                for d in range(n):
                    tmp[d] = s[d] + 0.5 * h * k2[d]
                _deriv(plant_id, &p[0], tmp, a, k3)
                for d in range(n):
                    tmp[d] = s[d] + h * k3[d]
                _deriv(plant_id, &p[0], tmp, a, k4)
                for d in range(n):
                    s[d] = s[d] + h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d])
                acc = acc + (reward_upper - _reward(plant_id, s))
            if not isfinite(acc):
                acc = penalty
            total[j] = acc
    return out
