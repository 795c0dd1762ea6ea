# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled plant kernels; see ``_kernels_py`` for the reference version."""

from libc.math cimport cos, sin

cdef double[8] _FX = [0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0, -1.0]
cdef double[8] _FY = [1.0, -1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0]
cdef double[8] _TQ = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]


cdef inline bint _gradient(const double[:, ::1] hmap, double x0, double y0, double cell,
                           double x, double y, double* gx, double* gy) noexcept nogil:
    cdef Py_ssize_t nx = hmap.shape[0], ny = hmap.shape[1], i, j
    cdef double u = (x - x0) / cell, v = (y - y0) / cell, fu, fv
    cdef double h00, h10, h01, h11
    if not (0.0 <= u <= nx - 1 and 0.0 <= v <= ny - 1):
        gx[0] = 0.0
        gy[0] = 0.0
        return False
    i = <Py_ssize_t>u
    j = <Py_ssize_t>v
    if i > nx - 2:
        i = nx - 2
    if j > ny - 2:
        j = ny - 2
    fu = u - i
    fv = v - j
    h00 = hmap[i, j]
    h10 = hmap[i + 1, j]
    h01 = hmap[i, j + 1]
    h11 = hmap[i + 1, j + 1]
    gx[0] = ((1.0 - fv) * (h10 - h00) + fv * (h11 - h01)) / cell
    gy[0] = ((1.0 - fu) * (h01 - h00) + fu * (h11 - h10)) / cell
    return True


cdef inline bint _deriv(double* s, double fbx, double fby, double mz, double tau,
                        double wx, double wy, double wz, const double[:, ::1] hmap,
                        double x0, double y0, double cell, double m, double ib, double iw,
                        double g, double* out) noexcept nogil:
    cdef double c = cos(s[2]), sn = sin(s[2]), gx, gy, fx, fy
    cdef bint inside = _gradient(hmap, x0, y0, cell, s[0], s[1], &gx, &gy)
    fx = c * fbx - sn * fby + wx - m * g * gx
    fy = sn * fbx + c * fby + wy - m * g * gy
    out[0] = s[3]
    out[1] = s[4]
    out[2] = s[5]
    out[3] = fx / m
    out[4] = fy / m
    out[5] = (mz - tau + wz) / ib
    out[6] = tau / iw
    return inside


def height_gradient(const double[:, ::1] hmap, double x0, double y0, double cell, double x, double y):
    cdef double gx, gy
    cdef bint inside = _gradient(hmap, x0, y0, cell, x, y, &gx, &gy)
    return gx, gy, inside


def plant_substeps(double[::1] state, const double[::1] thrust, double tau_cmd,
                   const double[::1] wrench, const double[:, ::1] hmap, double x0, double y0,
                   double cell, const double[::1] params, double dt, int n):
    cdef double m = params[0], ib = params[1], iw = params[2], r = params[3]
    cdef double wmax = params[5], tmax = params[6], g = params[7]
    cdef double fbx = 0.0, fby = 0.0, mz = 0.0, tau = 0.0, hi, lo
    cdef double wx = wrench[0], wy = wrench[1], wz = wrench[2]
    cdef double s[7]
    cdef double k1[7]
    cdef double k2[7]
    cdef double k3[7]
    cdef double k4[7]
    cdef double tmp[7]
    cdef int i, k, step
    cdef bint ok, off_map = False
    for k in range(8):
        fbx += _FX[k] * thrust[k]
        fby += _FY[k] * thrust[k]
        mz += _TQ[k] * thrust[k]
    mz *= r
    for i in range(7):
        s[i] = state[i]
    with nogil:
        for step in range(n):
            tau = tau_cmd
            if tau > tmax:
                tau = tmax
            elif tau < -tmax:
                tau = -tmax
            hi = (wmax - s[6]) * iw / dt
            lo = (-wmax - s[6]) * iw / dt
            if tau > hi:
                tau = hi
            if tau < lo:
                tau = lo
            ok = _deriv(s, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, m, ib, iw, g, k1)
            for i in range(7):
                tmp[i] = s[i] + 0.5 * dt * k1[i]
            ok &= _deriv(tmp, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, m, ib, iw, g, k2)
            for i in range(7):
                tmp[i] = s[i] + 0.5 * dt * k2[i]
            ok &= _deriv(tmp, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, m, ib, iw, g, k3)
            for i in range(7):
                tmp[i] = s[i] + dt * k3[i]
            ok &= _deriv(tmp, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, m, ib, iw, g, k4)
            for i in range(7):
                s[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if s[6] > wmax:
                s[6] = wmax
            elif s[6] < -wmax:
                s[6] = -wmax
            off_map = off_map or not ok
    for i in range(7):
        state[i] = s[i]
    return tau, off_map
