"""Numba-jitted hot kernels.

Three kernel families dominate runtime and live here:

* an exact transportation network simplex (LEMON-style block-search pivoting)
  for the quadratic-cost optimal transport LP,
* application of the truncated-Gaussian transition patch that drives the
  backward dynamic programs for the pricing field and the e^phi recursion,
* the Monte Carlo path loops (risk-neutral, Brownian-bridge and physical
  Euler simulation) with in-loop bilinear field lookups.

Everything is deterministic given its inputs; random increments are drawn by
the callers (numpy Philox) and passed in as arrays.
"""

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# exact transportation network simplex
# ---------------------------------------------------------------------------


@njit(cache=True, fastmath=False)
def network_simplex(src, tgt, a, b, eps_rel, pivot_cap):
    """Solve min sum_jk x_jk |src_j - tgt_k|^2 s.t. row sums a, col sums b.

    Bipartite network simplex with an artificial root basis and block pricing.
    Costs are computed on the fly from the point coordinates, so no dense cost
    matrix is materialized. Returns a basic optimal solution (at most n+m-1
    nonzeros), exact dual potentials recomputed from the final tree, and the
    most negative reduced cost over all arcs as an optimality certificate.

    Returns (status, n_pivots, plan_j, plan_k, plan_f, u, v, min_rc, art_max)
    with status 0 = optimal, 1 = pivot cap exceeded.
    """
    n = a.shape[0]
    m = b.shape[0]
    d = src.shape[1]
    nm = n * m
    nn = n + m
    root = nn

    # upper bound on the cost range via the coordinate bounding box
    maxc = 0.0
    for t in range(d):
        lo = src[0, t]
        hi = src[0, t]
        for j in range(n):
            if src[j, t] < lo:
                lo = src[j, t]
            if src[j, t] > hi:
                hi = src[j, t]
        for k in range(m):
            if tgt[k, t] < lo:
                lo = tgt[k, t]
            if tgt[k, t] > hi:
                hi = tgt[k, t]
        maxc += (hi - lo) * (hi - lo)
    art_cost = (nn + 1.0) * (maxc + 1.0)

    parent = np.empty(nn + 1, np.int64)
    pred_e = np.empty(nn + 1, np.int64)  # arc id; -1 artificial, -2 root
    fwd = np.empty(nn + 1, np.bool_)  # pred arc oriented child -> parent?
    flow = np.zeros(nn + 1, np.float64)  # flow on pred arc, keyed by child
    pi = np.zeros(nn + 1, np.float64)
    depth = np.zeros(nn + 1, np.int64)
    fc = np.full(nn + 1, -1, np.int64)  # first child
    nxt = np.full(nn + 1, -1, np.int64)  # next sibling
    prv = np.full(nn + 1, -1, np.int64)  # previous sibling
    state = np.ones(nm, np.uint8)  # 1 = nonbasic at lower bound, 0 = basic
    stack = np.empty(nn + 2, np.int64)

    parent[root] = -1
    pred_e[root] = -2
    depth[root] = 0
    pi[root] = 0.0
    prev = -1
    for u in range(nn):
        parent[u] = root
        depth[u] = 1
        pred_e[u] = -1
        if u < n:
            fwd[u] = True
            flow[u] = a[u]
            pi[u] = -art_cost
        else:
            fwd[u] = False
            flow[u] = b[u - n]
            pi[u] = art_cost
        prv[u] = prev
        if prev >= 0:
            nxt[prev] = u
        else:
            fc[root] = u
        prev = u

    eps = eps_rel * (maxc + 1.0)
    block = int(np.sqrt(nm)) + 1
    if block < 64:
        block = 64
    pos = 0
    npiv = 0
    status = 0

    while True:
        # -- pricing: most negative reduced cost within a block, cyclic order
        best = -eps
        best_e = -1
        e = pos
        j = e // m
        k = e - j * m
        cnt = 0
        scanned = 0
        while scanned < nm:
            if state[e] == 1:
                c = 0.0
                for t in range(d):
                    df = src[j, t] - tgt[k, t]
                    c += df * df
                rc = c + pi[j] - pi[n + k]
                if rc < best:
                    best = rc
                    best_e = e
            scanned += 1
            cnt += 1
            e += 1
            k += 1
            if k == m:
                k = 0
                j += 1
                if j == n:
                    j = 0
                    e = 0
            if cnt == block:
                cnt = 0
                if best_e >= 0:
                    break
        pos = e
        if best_e < 0:
            status = 0
            break
        if npiv >= pivot_cap:
            status = 1
            break
        npiv += 1

        in_j = best_e // m
        in_k = n + (best_e - in_j * m)

        # -- join node (LCA via depth walk)
        u = in_j
        v = in_k
        while u != v:
            if depth[u] >= depth[v]:
                u = parent[u]
            else:
                v = parent[v]
        join = u

        # -- leaving arc: min residual among arcs traversed against the push.
        # Source side is pushed parent->node, target side node->parent.
        delta = 1e300
        u_out = -1
        out_side = 0
        u = in_j
        while u != join:
            if fwd[u]:
                if flow[u] < delta:
                    delta = flow[u]
                    u_out = u
                    out_side = 1
            u = parent[u]
        u = in_k
        while u != join:
            if not fwd[u]:
                if flow[u] <= delta:
                    delta = flow[u]
                    u_out = u
                    out_side = 2
            u = parent[u]

        # -- push delta around the cycle
        if delta != 0.0:
            u = in_j
            while u != join:
                if fwd[u]:
                    flow[u] -= delta
                else:
                    flow[u] += delta
                u = parent[u]
            u = in_k
            while u != join:
                if fwd[u]:
                    flow[u] += delta
                else:
                    flow[u] -= delta
                u = parent[u]

        # -- restructure: cut subtree under u_out, re-root it at w, hang from
        # the entering arc's other endpoint.
        if out_side == 1:
            w = in_j
            v_in = in_k
            sigma = -best
        else:
            w = in_k
            v_in = in_j
            sigma = best
        old_e = pred_e[u_out]

        # chain w -> ... -> u_out (parents still original)
        ln = 0
        x = w
        stack[0] = x
        while x != u_out:
            x = parent[x]
            ln += 1
            stack[ln] = x

        # unlink u_out from its (main-tree) parent's child list
        pu = parent[u_out]
        if fc[pu] == u_out:
            fc[pu] = nxt[u_out]
        if prv[u_out] >= 0:
            nxt[prv[u_out]] = nxt[u_out]
        if nxt[u_out] >= 0:
            prv[nxt[u_out]] = prv[u_out]
        nxt[u_out] = -1
        prv[u_out] = -1

        # reverse the chain: stack[i] becomes the child of stack[i-1]
        for i in range(ln, 0, -1):
            ch_old = stack[i - 1]
            pn = stack[i]
            e_i = pred_e[ch_old]
            f_i = fwd[ch_old]
            fl_i = flow[ch_old]
            # unlink ch_old from pn's child list
            if fc[pn] == ch_old:
                fc[pn] = nxt[ch_old]
            if prv[ch_old] >= 0:
                nxt[prv[ch_old]] = nxt[ch_old]
            if nxt[ch_old] >= 0:
                prv[nxt[ch_old]] = prv[ch_old]
            nxt[ch_old] = -1
            prv[ch_old] = -1
            # pn hangs under ch_old with the reversed arc
            parent[pn] = ch_old
            pred_e[pn] = e_i
            fwd[pn] = not f_i
            flow[pn] = fl_i
            of = fc[ch_old]
            fc[ch_old] = pn
            prv[pn] = -1
            nxt[pn] = of
            if of >= 0:
                prv[of] = pn

        # attach w under v_in via the entering arc
        parent[w] = v_in
        pred_e[w] = best_e
        fwd[w] = w == in_j
        flow[w] = delta
        of = fc[v_in]
        fc[v_in] = w
        prv[w] = -1
        nxt[w] = of
        if of >= 0:
            prv[of] = w
        state[best_e] = 0
        if old_e >= 0:
            state[old_e] = 1

        # depth + potential update over the re-hung subtree
        depth[w] = depth[v_in] + 1
        sp = 0
        stack[0] = w
        while sp >= 0:
            x = stack[sp]
            sp -= 1
            pi[x] += sigma
            ch = fc[x]
            while ch >= 0:
                depth[ch] = depth[x] + 1
                sp += 1
                stack[sp] = ch
                ch = nxt[ch]

    # -- exact potential refresh from the final tree
    pi[root] = 0.0
    sp = 0
    stack[0] = root
    while sp >= 0:
        x = stack[sp]
        sp -= 1
        if x != root:
            e2 = pred_e[x]
            if e2 >= 0:
                jj = e2 // m
                kk = e2 - jj * m
                c = 0.0
                for t in range(d):
                    df = src[jj, t] - tgt[kk, t]
                    c += df * df
            else:
                c = art_cost
            if fwd[x]:
                pi[x] = pi[parent[x]] - c
            else:
                pi[x] = pi[parent[x]] + c
        ch = fc[x]
        while ch >= 0:
            sp += 1
            stack[sp] = ch
            ch = nxt[ch]

    # -- optimality certificate over all real arcs
    min_rc = 0.0
    for j in range(n):
        pj = pi[j]
        for k in range(m):
            if state[j * m + k] == 1:
                c = 0.0
                for t in range(d):
                    df = src[j, t] - tgt[k, t]
                    c += df * df
                rc = c + pj - pi[n + k]
                if rc < min_rc:
                    min_rc = rc

    # -- extract the basic plan and the artificial residual
    art_max = 0.0
    cnt = 0
    for u in range(nn):
        if pred_e[u] >= 0:
            if flow[u] > 0.0:
                cnt += 1
        else:
            if flow[u] > art_max:
                art_max = flow[u]
    plan_j = np.empty(cnt, np.int64)
    plan_k = np.empty(cnt, np.int64)
    plan_f = np.empty(cnt, np.float64)
    i = 0
    for u in range(nn):
        e2 = pred_e[u]
        if e2 >= 0 and flow[u] > 0.0:
            plan_j[i] = e2 // m
            plan_k[i] = e2 - (e2 // m) * m
            plan_f[i] = flow[u]
            i += 1

    u_dual = np.empty(n, np.float64)
    v_dual = np.empty(m, np.float64)
    for j in range(n):
        u_dual[j] = -pi[j]
    for k in range(m):
        v_dual[k] = pi[n + k]

    return status, npiv, plan_j, plan_k, plan_f, u_dual, v_dual, min_rc, art_max


# ---------------------------------------------------------------------------
# transition-patch application (backward dynamic programming step)
# ---------------------------------------------------------------------------


@njit(cache=True)
def apply_patch_1d(f, w, out):
    """out[i] = sum_p w[p] * f[i + p - c], zero outside the grid."""
    n = f.shape[0]
    p1 = w.shape[0]
    c = (p1 - 1) // 2
    for i in range(n):
        acc = 0.0
        lo = -c if i - c >= 0 else -i
        hi = c if i + c < n else n - 1 - i
        for p in range(lo, hi + 1):
            acc += w[p + c] * f[i + p]
        out[i] = acc
    return out


@njit(cache=True)
def apply_patch_2d(f, w, out):
    """out[i,j] = sum_pq w[p,q] * f[i+p-c1, j+q-c2], zero outside the grid."""
    n1 = f.shape[0]
    n2 = f.shape[1]
    p1 = w.shape[0]
    p2 = w.shape[1]
    c1 = (p1 - 1) // 2
    c2 = (p2 - 1) // 2
    for i in range(n1):
        plo = -c1 if i - c1 >= 0 else -i
        phi = c1 if i + c1 < n1 else n1 - 1 - i
        for j in range(n2):
            qlo = -c2 if j - c2 >= 0 else -j
            qhi = c2 if j + c2 < n2 else n2 - 1 - j
            acc = 0.0
            for p in range(plo, phi + 1):
                ii = i + p
                for q in range(qlo, qhi + 1):
                    acc += w[p + c1, q + c2] * f[ii, j + q]
            out[i, j] = acc
    return out


# ---------------------------------------------------------------------------
# path simulation
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _lin1(F, x0, h, n, x):
    t = (x - x0) / h
    i = int(np.floor(t))
    if i < 0:
        i = 0
        fr = 0.0
    elif i >= n - 1:
        i = n - 2
        fr = 1.0
    else:
        fr = t - i
    return F[i] * (1.0 - fr) + F[i + 1] * fr


@njit(cache=True, inline="always")
def _cell(x, x0, h, n):
    t = (x - x0) / h
    i = int(np.floor(t))
    if i < 0:
        return 0, 0.0
    if i >= n - 1:
        return n - 2, 1.0
    return i, t - i


@njit(cache=True)
def sim_paths_1d(mode, steps, dt, chol, dZ, drift, H, lamtr, x0, h, n,
                 zeta, vv, Y, P, bracket, bracket_real, sum_pdy, informed,
                 exited):
    """Simulate order-imbalance paths on a 1D field.

    mode 0 = risk-neutral BM, 1 = physical Euler with nearest-node drift,
    2 = exact Brownian bridge to zeta. dZ carries N(0,1) draws; they are
    scaled in-loop. P is the bilinear (here linear) lookup of H per step.
    """
    npaths = dZ.shape[0]
    T = steps * dt
    sig = chol[0, 0]
    for p in range(npaths):
        y = 0.0
        br = 0.0
        brr = 0.0
        spdy = 0.0
        inf_p = 0.0
        out = False
        Y[p, 0, 0] = 0.0
        pk = _lin1(H[0, :, 0], x0, h, n, 0.0)
        P[p, 0, 0] = pk
        for k in range(steps):
            if y < x0 or y > x0 + h * (n - 1):
                out = True
            br += _lin1(lamtr[k], x0, h, n, y) * dt
            if mode == 2:
                if k == steps - 1:
                    # final bridge increment is deterministic: Y_T = zeta
                    theta_dt = zeta[p, 0] - y
                    dy = theta_dt
                else:
                    rem = T - k * dt
                    theta_dt = (zeta[p, 0] - y) * dt / rem
                    sc = np.sqrt(dt * (rem - dt) / rem)
                    dy = theta_dt + sc * sig * dZ[p, k, 0]
                inf_p += (vv[p, 0] - pk) * theta_dt
            elif mode == 1:
                ti = int(np.floor((y - x0) / h + 0.5))
                if ti < 0:
                    ti = 0
                    out = True
                elif ti > n - 1:
                    ti = n - 1
                    out = True
                dy = drift[k, ti, 0] * dt + sig * np.sqrt(dt) * dZ[p, k, 0]
            else:
                dy = sig * np.sqrt(dt) * dZ[p, k, 0]
            spdy += pk * dy
            y += dy
            pk1 = _lin1(H[k + 1, :, 0], x0, h, n, y)
            brr += (pk1 - pk) * dy
            pk = pk1
            Y[p, k + 1, 0] = y
            P[p, k + 1, 0] = pk
        bracket[p] = br
        bracket_real[p] = brr
        sum_pdy[p] = spdy
        informed[p] = inf_p
        exited[p] = out


@njit(cache=True, inline="always")
def _bil2(F, x0, h0, n0, x1, h1, n1, xa, xb):
    i, fa = _cell(xa, x0, h0, n0)
    j, fb = _cell(xb, x1, h1, n1)
    return ((1.0 - fa) * ((1.0 - fb) * F[i, j] + fb * F[i, j + 1])
            + fa * ((1.0 - fb) * F[i + 1, j] + fb * F[i + 1, j + 1]))


@njit(cache=True)
def sim_paths_2d(mode, steps, dt, chol, dZ, drift, H, lamtr,
                 ax0, h0, n0, ax1, h1, n1,
                 zeta, vv, Y, P, bracket, bracket_real, sum_pdy, informed,
                 exited):
    """2D version of sim_paths_1d; same conventions per component."""
    npaths = dZ.shape[0]
    T = steps * dt
    sq = np.sqrt(dt)
    for p in range(npaths):
        ya = 0.0
        yb = 0.0
        br = 0.0
        brr = 0.0
        spdy = 0.0
        inf_p = 0.0
        out = False
        Y[p, 0, 0] = 0.0
        Y[p, 0, 1] = 0.0
        pa = _bil2(H[0, :, :, 0], ax0, h0, n0, ax1, h1, n1, 0.0, 0.0)
        pb = _bil2(H[0, :, :, 1], ax0, h0, n0, ax1, h1, n1, 0.0, 0.0)
        P[p, 0, 0] = pa
        P[p, 0, 1] = pb
        for k in range(steps):
            if (ya < ax0 or ya > ax0 + h0 * (n0 - 1)
                    or yb < ax1 or yb > ax1 + h1 * (n1 - 1)):
                out = True
            br += _bil2(lamtr[k], ax0, h0, n0, ax1, h1, n1, ya, yb) * dt
            e0 = dZ[p, k, 0]
            e1 = dZ[p, k, 1]
            g0 = chol[0, 0] * e0
            g1 = chol[1, 0] * e0 + chol[1, 1] * e1
            if mode == 2:
                if k == steps - 1:
                    th0 = zeta[p, 0] - ya
                    th1 = zeta[p, 1] - yb
                    dya = th0
                    dyb = th1
                else:
                    rem = T - k * dt
                    th0 = (zeta[p, 0] - ya) * dt / rem
                    th1 = (zeta[p, 1] - yb) * dt / rem
                    sc = np.sqrt(dt * (rem - dt) / rem)
                    dya = th0 + sc * g0
                    dyb = th1 + sc * g1
                inf_p += (vv[p, 0] - pa) * th0 + (vv[p, 1] - pb) * th1
            elif mode == 1:
                ti = int(np.floor((ya - ax0) / h0 + 0.5))
                tj = int(np.floor((yb - ax1) / h1 + 0.5))
                if ti < 0:
                    ti = 0
                    out = True
                elif ti > n0 - 1:
                    ti = n0 - 1
                    out = True
                if tj < 0:
                    tj = 0
                    out = True
                elif tj > n1 - 1:
                    tj = n1 - 1
                    out = True
                dya = drift[k, ti, tj, 0] * dt + sq * g0
                dyb = drift[k, ti, tj, 1] * dt + sq * g1
            else:
                dya = sq * g0
                dyb = sq * g1
            spdy += pa * dya + pb * dyb
            ya += dya
            yb += dyb
            pa1 = _bil2(H[k + 1, :, :, 0], ax0, h0, n0, ax1, h1, n1, ya, yb)
            pb1 = _bil2(H[k + 1, :, :, 1], ax0, h0, n0, ax1, h1, n1, ya, yb)
            brr += (pa1 - pa) * dya + (pb1 - pb) * dyb
            pa = pa1
            pb = pb1
            Y[p, k + 1, 0] = ya
            Y[p, k + 1, 1] = yb
            P[p, k + 1, 0] = pa
            P[p, k + 1, 1] = pb
        bracket[p] = br
        bracket_real[p] = brr
        sum_pdy[p] = spdy
        informed[p] = inf_p
        exited[p] = out
