"""Pure-Python plant kernels (reference implementation and fallback).

Mirrors ``_kernels.pyx`` operation for operation.
"""

from __future__ import annotations

import math

# thruster layout, duplicated here so the kernel has no numpy dependency
_FX = (0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0, -1.0)
_FY = (1.0, -1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
_TQ = (1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0)


def height_gradient(hmap, x0, y0, cell, x, y):
    """Bilinear gradient of a height grid ``hmap[i][j]`` at ``(x0 + i*cell, y0 + j*cell)``.

    Returns ``(dh/dx, dh/dy, inside)``; outside the grid the gradient is zero.
    """
    nx = len(hmap)
    ny = len(hmap[0])
    u = (x - x0) / cell
    v = (y - y0) / cell
    if not (0.0 <= u <= nx - 1 and 0.0 <= v <= ny - 1):
        return 0.0, 0.0, False
    i = min(int(u), nx - 2)
    j = min(int(v), ny - 2)
    fu = u - i
    fv = v - j
    h00 = hmap[i][j]
    h10 = hmap[i + 1][j]
    h01 = hmap[i][j + 1]
    h11 = hmap[i + 1][j + 1]
    gx = ((1.0 - fv) * (h10 - h00) + fv * (h11 - h01)) / cell
    gy = ((1.0 - fu) * (h01 - h00) + fu * (h11 - h10)) / cell
    return gx, gy, True


def _deriv(s, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, p, out):
    m, ib, iw, g = p[0], p[1], p[2], p[7]
    th = s[2]
    c = math.cos(th)
    sn = math.sin(th)
    gx, gy, inside = height_gradient(hmap, x0, y0, cell, s[0], s[1])
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


def plant_substeps(state, thrust, tau_cmd, wrench, hmap, x0, y0, cell, params, dt, n):
    """Advance ``state`` (list of 7 floats, updated in place) by ``n`` RK4 steps.

    Args:
        thrust: Eight thruster forces (already 0 or f_nom for valves).
        tau_cmd: Requested wheel torque; limited to +-tau_max and so that
            one step never carries the wheel beyond +-omega_max.
        wrench: Extra world-frame ``(fx, fy, mz)``.
        params: ``(m, I_b, I_w, r, f_nom, omega_max, tau_max, g)``.

    Returns:
        ``(tau_applied_last, off_map)``: torque applied on the last step and
        whether any stage evaluated outside the heightmap.
    """
    r = params[3]
    iw = params[2]
    wmax = params[5]
    tmax = params[6]
    fbx = 0.0
    fby = 0.0
    mz = 0.0
    for k in range(8):
        fbx += _FX[k] * thrust[k]
        fby += _FY[k] * thrust[k]
        mz += _TQ[k] * thrust[k]
    mz *= r
    wx, wy, wz = wrench[0], wrench[1], wrench[2]
    k1 = [0.0] * 7
    k2 = [0.0] * 7
    k3 = [0.0] * 7
    k4 = [0.0] * 7
    tmp = [0.0] * 7
    off_map = False
    tau = 0.0
    for _ in range(n):
        tau = tau_cmd
        if tau > tmax:
            tau = tmax
        elif tau < -tmax:
            tau = -tmax
        hi = (wmax - state[6]) * iw / dt
        lo = (-wmax - state[6]) * iw / dt
        if tau > hi:
            tau = hi
        if tau < lo:
            tau = lo
        ok = _deriv(state, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, params, k1)
        for i in range(7):
            tmp[i] = state[i] + 0.5 * dt * k1[i]
        ok &= _deriv(tmp, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, params, k2)
        for i in range(7):
            tmp[i] = state[i] + 0.5 * dt * k2[i]
        ok &= _deriv(tmp, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, params, k3)
        for i in range(7):
            tmp[i] = state[i] + dt * k3[i]
        ok &= _deriv(tmp, fbx, fby, mz, tau, wx, wy, wz, hmap, x0, y0, cell, params, k4)
        for i in range(7):
            state[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if state[6] > wmax:
            state[6] = wmax
        elif state[6] < -wmax:
            state[6] = -wmax
        off_map = off_map or not ok
    return tau, off_map
