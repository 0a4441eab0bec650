"""Compiled inner loops for the flow module.

Everything here is sequential in its ordering-sensitive parts (line
relaxation, red-black SOR) so results do not depend on the thread count;
only embarrassingly parallel per-pixel tables use ``prange``.
"""
import warnings

import numpy as np
from numba import njit, prange

# an outdated system TBB only disables that backend; numba falls back quietly otherwise
warnings.filterwarnings("ignore", message="The TBB threading layer")


@njit(cache=True, inline="always")
def _trunc_l1(a, b, d1):
    c = 0.0
    for k in range(a.shape[0]):
        c += abs(np.float64(a[k]) - np.float64(b[k]))
    return min(c, d1)


@njit(cache=True, parallel=True)
def unary_costs(s1, s2, cu, cv, r, d1, eta):
    """Data plus small-displacement cost for every pixel and window label."""
    h, w, _ = s1.shape
    n = 2 * r + 1
    out = np.empty((h, w, n * n))
    for z in prange(h):
        for y in range(w):
            for k in range(n * n):
                u = cu[z, y] + k % n - r
                v = cv[z, y] + k // n - r
                ty = y + u
                tz = z + v
                if ty < 0 or ty >= w or tz < 0 or tz >= h:
                    c = d1
                else:
                    c = _trunc_l1(s1[z, y], s2[tz, ty], d1)
                out[z, y, k] = c + eta * (abs(u) + abs(v))
    return out


@njit(cache=True)
def flow_energy(s1, s2, u, v, d1, d2, eta, alpha):
    """Truncated-L1 matching energy of an integer flow (4-neighbour edges)."""
    h, w, _ = s1.shape
    e = 0.0
    for z in range(h):
        for y in range(w):
            ty = y + u[z, y]
            tz = z + v[z, y]
            if ty < 0 or ty >= w or tz < 0 or tz >= h:
                e += d1
            else:
                e += _trunc_l1(s1[z, y], s2[tz, ty], d1)
            e += eta * (abs(u[z, y]) + abs(v[z, y]))
            if y + 1 < w:
                e += min(alpha * abs(u[z, y] - u[z, y + 1]), d2)
                e += min(alpha * abs(v[z, y] - v[z, y + 1]), d2)
            if z + 1 < h:
                e += min(alpha * abs(u[z, y] - u[z + 1, y]), d2)
                e += min(alpha * abs(v[z, y] - v[z + 1, y]), d2)
    return e


@njit(cache=True, inline="always")
def _pair(ua, va, ub, vb, alpha, d2):
    return min(alpha * abs(ua - ub), d2) + min(alpha * abs(va - vb), d2)


@njit(cache=True)
def _dt1(vals, off, n, alpha, d2, d, a, out, arg):
    """min_j vals[j] + min(alpha |j - (k + off)|, d2) for targets k = 0..n-1."""
    d[0] = vals[0]
    a[0] = 0
    for j in range(1, n):
        if d[j - 1] + alpha < vals[j]:
            d[j] = d[j - 1] + alpha
            a[j] = a[j - 1]
        else:
            d[j] = vals[j]
            a[j] = j
    for j in range(n - 2, -1, -1):
        if d[j + 1] + alpha < d[j]:
            d[j] = d[j + 1] + alpha
            a[j] = a[j + 1]
    mn = vals[0]
    mi = 0
    for j in range(1, n):
        if vals[j] < mn:
            mn = vals[j]
            mi = j
    for k in range(n):
        t = k + off
        if t < 0:
            c = d[0] - alpha * t
            ai = a[0]
        elif t >= n:
            c = d[n - 1] + alpha * (t - n + 1)
            ai = a[n - 1]
        else:
            c = d[t]
            ai = a[t]
        if mn + d2 < c:
            c = mn + d2
            ai = mi
        out[k] = c
        arg[k] = ai


@njit(cache=True)
def _relax_line(U, cu, cv, lab, n, r, alpha, d2, zs, ys, cost, acc, back, newlab,
                vals, dtv, dta, out1, arg1, out2, arg2):
    """Exact minimisation over one chain of pixels, rest of the labelling fixed.

    Returns True when the chain labelling changed (strict energy decrease).
    """
    h, w, L = U.shape
    m = zs.shape[0]
    # unary + links to fixed neighbours outside the chain
    for i in range(m):
        z = zs[i]
        y = ys[i]
        for k in range(L):
            cost[i, k] = U[z, y, k]
        for t in range(4):
            if t == 0:
                qz, qy = z - 1, y
            elif t == 1:
                qz, qy = z + 1, y
            elif t == 2:
                qz, qy = z, y - 1
            else:
                qz, qy = z, y + 1
            if qz < 0 or qz >= h or qy < 0 or qy >= w:
                continue
            if i > 0 and qz == zs[i - 1] and qy == ys[i - 1]:
                continue
            if i + 1 < m and qz == zs[i + 1] and qy == ys[i + 1]:
                continue
            ql = lab[qz, qy]
            uq = cu[qz, qy] + ql % n - r
            vq = cv[qz, qy] + ql // n - r
            for k in range(L):
                up = cu[z, y] + k % n - r
                vp = cv[z, y] + k // n - r
                cost[i, k] += _pair(up, vp, uq, vq, alpha, d2)

    # current chain energy
    old = 0.0
    for i in range(m):
        old += cost[i, lab[zs[i], ys[i]]]
        if i > 0:
            la = lab[zs[i - 1], ys[i - 1]]
            lb = lab[zs[i], ys[i]]
            old += _pair(cu[zs[i - 1], ys[i - 1]] + la % n - r,
                         cv[zs[i - 1], ys[i - 1]] + la // n - r,
                         cu[zs[i], ys[i]] + lb % n - r,
                         cv[zs[i], ys[i]] + lb // n - r, alpha, d2)

    # Viterbi; the pairwise term is separable in u and v, so each message is
    # two truncated-L1 distance transforms instead of an L x L scan
    for k in range(L):
        acc[0, k] = cost[0, k]
    for i in range(1, m):
        za, ya = zs[i - 1], ys[i - 1]
        zb, yb = zs[i], ys[i]
        du_off = cu[zb, yb] - cu[za, ya]
        dv_off = cv[zb, yb] - cv[za, ya]
        for jv in range(n):
            for j in range(n):
                vals[j] = acc[i - 1, jv * n + j]
            _dt1(vals, du_off, n, alpha, d2, dtv, dta, out1[jv], arg1[jv])
        for ku in range(n):
            for jv in range(n):
                vals[jv] = out1[jv, ku]
            _dt1(vals, dv_off, n, alpha, d2, dtv, dta, out2, arg2)
            for kv in range(n):
                k = kv * n + ku
                jv = arg2[kv]
                acc[i, k] = out2[kv] + cost[i, k]
                back[i, k] = jv * n + arg1[jv, ku]
    best = np.inf
    arg = 0
    for k in range(L):
        if acc[m - 1, k] < best:
            best = acc[m - 1, k]
            arg = k
    if not best < old - 1e-10 * (1.0 + abs(old)):
        return False
    newlab[m - 1] = arg
    for i in range(m - 1, 0, -1):
        newlab[i - 1] = back[i, newlab[i]]
    for i in range(m):
        lab[zs[i], ys[i]] = newlab[i]
    return True


@njit(cache=True)
def relax(U, cu, cv, lab, r, alpha, d2, n_iter):
    """Block-coordinate descent over rows and columns; never raises the energy.

    One iteration sweeps rows top-down, columns left-right, rows bottom-up
    and columns right-left, each line solved exactly by dynamic programming.
    Stops early once a full iteration changes nothing.  Returns the number
    of iterations run.
    """
    h, w, L = U.shape
    n = 2 * r + 1
    m = max(h, w)
    cost = np.empty((m, L))
    acc = np.empty((m, L))
    back = np.zeros((m, L), dtype=np.int64)
    newlab = np.zeros(m, dtype=np.int64)
    vals = np.empty(n)
    dtv = np.empty(n)
    dta = np.zeros(n, dtype=np.int64)
    out1 = np.empty((n, n))
    arg1 = np.zeros((n, n), dtype=np.int64)
    out2 = np.empty(n)
    arg2 = np.zeros(n, dtype=np.int64)
    row_y = np.arange(w)
    col_z = np.arange(h)
    it = 0
    while it < n_iter:
        it += 1
        changed = False
        for sweep in range(4):
            if sweep % 2 == 0:
                for s in range(h):
                    z = s if sweep == 0 else h - 1 - s
                    zs = np.full(w, z)
                    if _relax_line(U, cu, cv, lab, n, r, alpha, d2, zs, row_y,
                                   cost, acc, back, newlab,
                                   vals, dtv, dta, out1, arg1, out2, arg2):
                        changed = True
            else:
                for s in range(w):
                    y = s if sweep == 1 else w - 1 - s
                    ys = np.full(h, y)
                    if _relax_line(U, cu, cv, lab, n, r, alpha, d2, col_z, ys,
                                   cost, acc, back, newlab,
                                   vals, dtv, dta, out1, arg1, out2, arg2):
                        changed = True
        if not changed:
            break
    return it


@njit(cache=True)
def sor_solve(du, dv, u, v, ix, iy, it, psi_d, wx, wy, n_sor, omega):
    """Red-black SOR on the lagged-diffusivity normal equations.

    ``wx[z, y]`` weights the edge to ``(z, y+1)`` and ``wy[z, y]`` the edge
    to ``(z+1, y)``; both already include the regularisation weight.
    Updates ``du`` and ``dv`` in place.
    """
    h, w = du.shape
    for _ in range(n_sor):
        for color in range(2):
            for z in range(h):
                start = (z + color) % 2
                for y in range(start, w, 2):
                    sw = 0.0
                    su = 0.0
                    sv = 0.0
                    if y + 1 < w:
                        c = wx[z, y]
                        sw += c
                        su += c * (u[z, y + 1] + du[z, y + 1] - u[z, y])
                        sv += c * (v[z, y + 1] + dv[z, y + 1] - v[z, y])
                    if y > 0:
                        c = wx[z, y - 1]
                        sw += c
                        su += c * (u[z, y - 1] + du[z, y - 1] - u[z, y])
                        sv += c * (v[z, y - 1] + dv[z, y - 1] - v[z, y])
                    if z + 1 < h:
                        c = wy[z, y]
                        sw += c
                        su += c * (u[z + 1, y] + du[z + 1, y] - u[z, y])
                        sv += c * (v[z + 1, y] + dv[z + 1, y] - v[z, y])
                    if z > 0:
                        c = wy[z - 1, y]
                        sw += c
                        su += c * (u[z - 1, y] + du[z - 1, y] - u[z, y])
                        sv += c * (v[z - 1, y] + dv[z - 1, y] - v[z, y])
                    pd = psi_d[z, y]
                    gx = ix[z, y]
                    gy = iy[z, y]
                    a11 = pd * gx * gx + sw + 1e-12
                    a22 = pd * gy * gy + sw + 1e-12
                    a12 = pd * gx * gy
                    b1 = -pd * gx * it[z, y] + su
                    b2 = -pd * gy * it[z, y] + sv
                    nu = (b1 - a12 * dv[z, y]) / a11
                    du[z, y] = (1.0 - omega) * du[z, y] + omega * nu
                    nv = (b2 - a12 * du[z, y]) / a22
                    dv[z, y] = (1.0 - omega) * dv[z, y] + omega * nv
