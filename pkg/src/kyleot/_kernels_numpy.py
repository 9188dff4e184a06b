"""Pure-numpy fallback kernels (selected with KTL_NUMBA=0).

The array kernels are vectorized re-implementations of the numba loops with
the same per-path operation order, so results agree with the JIT backend to
floating-point noise. The network simplex is the identical algorithm executed
as plain Python (``.py_func``): exact, but only practical at small sizes.
"""

import numpy as np

from kyleot import _kernels_numba as _nb

network_simplex = _nb.network_simplex.py_func


def apply_patch_1d(f, w, out):
    n = f.shape[0]
    p1 = w.shape[0]
    c = (p1 - 1) // 2
    out[:] = 0.0
    for p in range(p1):
        dp = p - c
        s = max(0, -dp)
        e = min(n, n - dp)
        out[s:e] += w[p] * f[s + dp:e + dp]
    return out


def apply_patch_2d(f, w, out):
    n1, n2 = f.shape
    p1, p2 = w.shape
    c1 = (p1 - 1) // 2
    c2 = (p2 - 1) // 2
    out[:] = 0.0
    for p in range(p1):
        dp = p - c1
        s0 = max(0, -dp)
        e0 = min(n1, n1 - dp)
        for q in range(p2):
            dq = q - c2
            s1 = max(0, -dq)
            e1 = min(n2, n2 - dq)
            out[s0:e0, s1:e1] += w[p, q] * f[s0 + dp:e0 + dp, s1 + dq:e1 + dq]
    return out


def _lin1_vec(F, x0, h, n, x):
    t = (x - x0) / h
    i = np.floor(t).astype(np.int64)
    fr = t - i
    fr[i < 0] = 0.0
    fr[i >= n - 1] = 1.0
    i = np.clip(i, 0, n - 2)
    return F[i] * (1.0 - fr) + F[i + 1] * fr


def _bil2_vec(F, ax0, h0, n0, ax1, h1, n1, xa, xb):
    ta = (xa - ax0) / h0
    i = np.floor(ta).astype(np.int64)
    fa = ta - i
    fa[i < 0] = 0.0
    fa[i >= n0 - 1] = 1.0
    i = np.clip(i, 0, n0 - 2)
    tb = (xb - ax1) / h1
    j = np.floor(tb).astype(np.int64)
    fb = tb - j
    fb[j < 0] = 0.0
    fb[j >= n1 - 1] = 1.0
    j = np.clip(j, 0, n1 - 2)
    return ((1.0 - fa) * ((1.0 - fb) * F[i, j] + fb * F[i, j + 1])
            + fa * ((1.0 - fb) * F[i + 1, j] + fb * F[i + 1, j + 1]))


def sim_paths_1d(mode, steps, dt, chol, dZ, drift, H, lamtr, x0, h, n,
                 zeta, vv, Y, P, bracket, bracket_real, sum_pdy, informed,
                 exited):
    npaths = dZ.shape[0]
    T = steps * dt
    sig = chol[0, 0]
    hi_edge = x0 + h * (n - 1)
    y = np.zeros(npaths)
    br = np.zeros(npaths)
    brr = np.zeros(npaths)
    spdy = np.zeros(npaths)
    infp = np.zeros(npaths)
    out = np.zeros(npaths, dtype=bool)
    Y[:, 0, 0] = 0.0
    pk = np.full(npaths, _lin1_vec(H[0, :, 0], x0, h, n, np.zeros(1))[0])
    P[:, 0, 0] = pk
    sqdt = np.sqrt(dt)
    for k in range(steps):
        out |= (y < x0) | (y > hi_edge)
        br += _lin1_vec(lamtr[k], x0, h, n, y) * dt
        if mode == 2:
            if k == steps - 1:
                theta_dt = zeta[:, 0] - y
                dy = theta_dt.copy()
            else:
                rem = T - k * dt
                theta_dt = (zeta[:, 0] - y) * dt / rem
                sc = np.sqrt(dt * (rem - dt) / rem)
                dy = theta_dt + sc * sig * dZ[:, k, 0]
            infp += (vv[:, 0] - pk) * theta_dt
        elif mode == 1:
            ti = np.floor((y - x0) / h + 0.5).astype(np.int64)
            out |= (ti < 0) | (ti > n - 1)
            ti = np.clip(ti, 0, n - 1)
            dy = drift[k, ti, 0] * dt + sig * sqdt * dZ[:, k, 0]
        else:
            dy = sig * sqdt * dZ[:, k, 0]
        spdy += pk * dy
        y = y + dy
        pk1 = _lin1_vec(H[k + 1, :, 0], x0, h, n, y)
        brr += (pk1 - pk) * dy
        pk = pk1
        Y[:, k + 1, 0] = y
        P[:, k + 1, 0] = pk
    bracket[:] = br
    bracket_real[:] = brr
    sum_pdy[:] = spdy
    informed[:] = infp
    exited[:] = out


def sim_paths_2d(mode, steps, dt, chol, dZ, drift, H, lamtr,
                 ax0, h0, n0, ax1, h1, n1,
                 zeta, vv, Y, P, bracket, bracket_real, sum_pdy, informed,
                 exited):
    npaths = dZ.shape[0]
    T = steps * dt
    sqdt = np.sqrt(dt)
    hi0 = ax0 + h0 * (n0 - 1)
    hi1 = ax1 + h1 * (n1 - 1)
    ya = np.zeros(npaths)
    yb = np.zeros(npaths)
    br = np.zeros(npaths)
    brr = np.zeros(npaths)
    spdy = np.zeros(npaths)
    infp = np.zeros(npaths)
    out = np.zeros(npaths, dtype=bool)
    Y[:, 0, :] = 0.0
    z = np.zeros(1)
    pa = np.full(npaths, _bil2_vec(H[0, :, :, 0], ax0, h0, n0, ax1, h1, n1, z, z)[0])
    pb = np.full(npaths, _bil2_vec(H[0, :, :, 1], ax0, h0, n0, ax1, h1, n1, z, z)[0])
    P[:, 0, 0] = pa
    P[:, 0, 1] = pb
    for k in range(steps):
        out |= (ya < ax0) | (ya > hi0) | (yb < ax1) | (yb > hi1)
        br += _bil2_vec(lamtr[k], ax0, h0, n0, ax1, h1, n1, ya, yb) * dt
        e0 = dZ[:, k, 0]
        e1 = dZ[:, k, 1]
        g0 = chol[0, 0] * e0
        g1 = chol[1, 0] * e0 + chol[1, 1] * e1
        if mode == 2:
            if k == steps - 1:
                th0 = zeta[:, 0] - ya
                th1 = zeta[:, 1] - yb
                dya = th0.copy()
                dyb = th1.copy()
            else:
                rem = T - k * dt
                th0 = (zeta[:, 0] - ya) * dt / rem
                th1 = (zeta[:, 1] - yb) * dt / rem
                sc = np.sqrt(dt * (rem - dt) / rem)
                dya = th0 + sc * g0
                dyb = th1 + sc * g1
            infp += (vv[:, 0] - pa) * th0 + (vv[:, 1] - pb) * th1
        elif mode == 1:
            ti = np.floor((ya - ax0) / h0 + 0.5).astype(np.int64)
            tj = np.floor((yb - ax1) / h1 + 0.5).astype(np.int64)
            out |= (ti < 0) | (ti > n0 - 1) | (tj < 0) | (tj > n1 - 1)
            ti = np.clip(ti, 0, n0 - 1)
            tj = np.clip(tj, 0, n1 - 1)
            dya = drift[k, ti, tj, 0] * dt + sqdt * g0
            dyb = drift[k, ti, tj, 1] * dt + sqdt * g1
        else:
            dya = sqdt * g0
            dyb = sqdt * g1
        spdy += pa * dya + pb * dyb
        ya = ya + dya
        yb = yb + dyb
        pa1 = _bil2_vec(H[k + 1, :, :, 0], ax0, h0, n0, ax1, h1, n1, ya, yb)
        pb1 = _bil2_vec(H[k + 1, :, :, 1], ax0, h0, n0, ax1, h1, n1, ya, yb)
        brr += (pa1 - pa) * dya + (pb1 - pb) * dyb
        pa = pa1
        pb = pb1
        Y[:, k + 1, 0] = ya
        Y[:, k + 1, 1] = yb
        P[:, k + 1, 0] = pa
        P[:, k + 1, 1] = pb
    bracket[:] = br
    bracket_real[:] = brr
    sum_pdy[:] = spdy
    informed[:] = infp
    exited[:] = out
