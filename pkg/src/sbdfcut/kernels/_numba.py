"""Numba-compiled scalar-loop implementations of the hot kernels."""

import numpy as np
from numba import njit

from ..polybasis import QUAD


@njit(cache=True)
def _eval1(c, x1, x2, k, out):
    out[0] = 0.0
    out[1] = 0.0
    nc = k + 1
    p1 = 1.0
    for p in range(nc):
        p2 = 1.0
        for q in range(nc):
            m = p * nc + q
            w = p1 * p2
            out[0] += w * c[m, 0]
            out[1] += w * c[m, 1]
            p2 *= x2
        p1 *= x1


@njit(cache=True)
def _eval1_jac(c, x1, x2, k, val, jac):
    nc = k + 1
    for i in range(2):
        val[i] = 0.0
        jac[i, 0] = 0.0
        jac[i, 1] = 0.0
    for p in range(nc):
        a = x1**p
        da = p * x1 ** (p - 1) if p > 0 else 0.0
        for q in range(nc):
            b = x2**q
            db = q * x2 ** (q - 1) if q > 0 else 0.0
            m = p * nc + q
            for i in range(2):
                ci = c[m, i]
                val[i] += a * b * ci
                jac[i, 0] += da * b * ci
                jac[i, 1] += a * db * ci


@njit(cache=True)
def eval_poly(coef, ids, xi, k):
    n = xi.shape[0]
    nch = coef.shape[2]
    nc = k + 1
    out = np.zeros((n, nch))
    for i in range(n):
        c = coef[ids[i]]
        p1 = 1.0
        for p in range(nc):
            p2 = 1.0
            for q in range(nc):
                w = p1 * p2
                m = p * nc + q
                for ch in range(nch):
                    out[i, ch] += w * c[m, ch]
                p2 *= xi[i, 1]
            p1 *= xi[i, 0]
    return out


@njit(cache=True)
def eval_poly_jac(coef, ids, xi, k):
    n = xi.shape[0]
    val = np.zeros((n, 2))
    jac = np.zeros((n, 2, 2))
    v = np.zeros(2)
    J = np.zeros((2, 2))
    for i in range(n):
        _eval1_jac(coef[ids[i]], xi[i, 0], xi[i, 1], k, v, J)
        val[i, 0] = v[0]
        val[i, 1] = v[1]
        jac[i] = J
    return val, jac


@njit(cache=True)
def _violation(x1, x2, kind):
    v = 0.0
    if -x1 > v:
        v = -x1
    if -x2 > v:
        v = -x2
    if kind == QUAD:
        if x1 - 1.0 > v:
            v = x1 - 1.0
        if x2 - 1.0 > v:
            v = x2 - 1.0
    else:
        if x1 + x2 - 1.0 > v:
            v = x1 + x2 - 1.0
    return v


@njit(cache=True)
def _newton(c, x, y, s1, s2, k, tol, maxit, out):
    """Newton solve of ``G(xi) = (x, y)``; writes xi into ``out``, returns converged flag."""
    v = np.zeros(2)
    J = np.zeros((2, 2))
    a, b = s1, s2
    for _ in range(maxit):
        _eval1_jac(c, a, b, k, v, J)
        r0 = v[0] - x
        r1 = v[1] - y
        if np.sqrt(r0 * r0 + r1 * r1) <= tol:
            out[0] = a
            out[1] = b
            return True
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if abs(det) < 1e-300:
            return False
        d0 = (J[1, 1] * r0 - J[0, 1] * r1) / det
        d1 = (-J[1, 0] * r0 + J[0, 0] * r1) / det
        a -= d0
        b -= d1
        if abs(a) > 1e3 or abs(b) > 1e3:
            return False
        if np.sqrt(d0 * d0 + d1 * d1) <= 1e-14:
            out[0] = a
            out[1] = b
            return True
    out[0] = a
    out[1] = b
    return False


@njit(cache=True)
def invert_maps(coef, kinds, ptr, cand, points, k, tol, tol_in, maxit):
    npts = points.shape[0]
    best = np.full(npts, -1, dtype=np.int64)
    best_xi = np.zeros((npts, 2))
    best_v = np.full(npts, np.inf)
    nc = k + 1
    xi = np.zeros(2)
    g = np.zeros(2)
    for i in range(npts):
        x = points[i, 0]
        y = points[i, 1]
        # pass 0: affine seed; pass 1 (only if nothing contains the point):
        # 8x8 reference-grid seed, since the affine seed may land on a spurious
        # root of the polynomial map outside the element
        for sweep in range(2):
            if sweep == 1 and best_v[i] <= tol_in:
                break
            for jj in range(ptr[i], ptr[i + 1]):
                r = cand[jj]
                c = coef[r]
                if sweep == 0:
                    c00x, c00y = c[0, 0], c[0, 1]
                    c10x = 0.0
                    c10y = 0.0
                    c01x = 0.0
                    c01y = 0.0
                    for p in range(nc):
                        c10x += c[p * nc, 0]
                        c10y += c[p * nc, 1]
                        c01x += c[p, 0]
                        c01y += c[p, 1]
                    ax, ay = c10x - c00x, c10y - c00y
                    bx, by = c01x - c00x, c01y - c00y
                    det = ax * by - bx * ay
                    if abs(det) < 1e-300:
                        det = 1e-300
                    s1 = (by * (x - c00x) - bx * (y - c00y)) / det
                    s2 = (-ay * (x - c00x) + ax * (y - c00y)) / det
                else:
                    bestr = np.inf
                    s1 = 0.5
                    s2 = 0.5
                    for a in range(8):
                        for b in range(8):
                            u1 = (a + 0.5) / 8
                            u2 = (b + 0.5) / 8
                            if kinds[r] != QUAD and u1 + u2 > 1.0:
                                continue
                            _eval1(c, u1, u2, k, g)
                            e = (g[0] - x) ** 2 + (g[1] - y) ** 2
                            if e < bestr:
                                bestr = e
                                s1 = u1
                                s2 = u2
                ok = _newton(c, x, y, s1, s2, k, tol, maxit, xi)
                if not ok:
                    continue
                v = _violation(xi[0], xi[1], kinds[r])
                if v < best_v[i]:
                    best[i] = r
                    best_xi[i, 0] = xi[0]
                    best_xi[i, 1] = xi[1]
                    best_v[i] = v
                if v <= tol_in:
                    break
    return best, best_xi, best_v


@njit(cache=True)
def closest_on_edges(coef, ptr, cand, points, k, maxit):
    npts = points.shape[0]
    best = np.full(npts, -1, dtype=np.int64)
    best_s = np.zeros(npts)
    best_d = np.full(npts, np.inf)
    nc = k + 1
    e = np.zeros((nc, 2))
    for i in range(npts):
        x = points[i, 0]
        y = points[i, 1]
        for jj in range(ptr[i], ptr[i + 1]):
            r = cand[jj]
            for p in range(nc):
                e[p, 0] = coef[r, p * nc, 0]
                e[p, 1] = coef[r, p * nc, 1]
            # coarse sampling then safeguarded Newton on (e(s) - x) . e'(s) = 0
            s = 0.0
            dmin = np.inf
            for a in range(9):
                t = a / 8.0
                px = 0.0
                py = 0.0
                tp = 1.0
                for p in range(nc):
                    px += e[p, 0] * tp
                    py += e[p, 1] * tp
                    tp *= t
                d = (px - x) ** 2 + (py - y) ** 2
                if d < dmin:
                    dmin = d
                    s = t
            for _ in range(maxit):
                px = 0.0
                py = 0.0
                d1x = 0.0
                d1y = 0.0
                d2x = 0.0
                d2y = 0.0
                for p in range(nc):
                    sp = s**p
                    px += e[p, 0] * sp
                    py += e[p, 1] * sp
                    if p >= 1:
                        s1 = p * s ** (p - 1)
                        d1x += e[p, 0] * s1
                        d1y += e[p, 1] * s1
                    if p >= 2:
                        s2 = p * (p - 1) * s ** (p - 2)
                        d2x += e[p, 0] * s2
                        d2y += e[p, 1] * s2
                rx = px - x
                ry = py - y
                f = d1x * rx + d1y * ry
                fp = d2x * rx + d2y * ry + d1x * d1x + d1y * d1y
                if fp <= 0.0:
                    fp = d1x * d1x + d1y * d1y + 1e-300
                ds = f / fp
                s_new = s - ds
                if s_new < 0.0:
                    s_new = 0.0
                elif s_new > 1.0:
                    s_new = 1.0
                step = abs(s_new - s)
                s = s_new
                if step < 1e-15:
                    break
            px = 0.0
            py = 0.0
            for p in range(nc):
                sp = s**p
                px += e[p, 0] * sp
                py += e[p, 1] * sp
            d = np.sqrt((px - x) ** 2 + (py - y) ** 2)
            if d < best_d[i]:
                best_d[i] = d
                best[i] = r
                best_s[i] = s
    return best, best_s, best_d
