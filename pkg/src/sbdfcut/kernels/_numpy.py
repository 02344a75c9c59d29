"""Vectorized NumPy implementations of the hot kernels.

All functions share signatures with :mod:`sbdfcut.kernels._numba`.  Work is
batched over points (or point/candidate pairs) with masks instead of loops.
"""

import numpy as np

from ..polybasis import QUAD, monomial_derivs, monomials


def eval_poly(coef, ids, xi, k):
    M = monomials(xi, k)
    return np.einsum("pm,pmc->pc", M, coef[ids])


def eval_poly_jac(coef, ids, xi, k):
    c = coef[ids]
    M = monomials(xi, k)
    D1 = monomial_derivs(xi, k, 1, 0)
    D2 = monomial_derivs(xi, k, 0, 1)
    val = np.einsum("pm,pmc->pc", M, c)
    jac = np.stack(
        [np.einsum("pm,pmc->pc", D1, c), np.einsum("pm,pmc->pc", D2, c)], axis=2
    )
    return val, jac


def _violation(xi, kinds):
    a, b = xi[:, 0], xi[:, 1]
    vq = np.maximum.reduce([np.zeros_like(a), -a, a - 1.0, -b, b - 1.0])
    vt = np.maximum.reduce([np.zeros_like(a), -a, -b, a + b - 1.0])
    return np.where(kinds == QUAD, vq, vt)


def _newton(c, x, xi, tol, maxit, k):
    """Batched Newton for ``G(xi) = x`` over pairs; returns xi and converged mask."""
    n = len(x)
    done = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    rows = np.arange(n)
    for _ in range(maxit):
        idx = rows[alive & ~done]
        if idx.size == 0:
            break
        xs = xi[idx]
        cc = c[idx]
        M = monomials(xs, k)
        r = np.einsum("pm,pmc->pc", M, cc) - x[idx]
        res = np.hypot(r[:, 0], r[:, 1])
        ok = res <= tol
        done[idx[ok]] = True
        idx, xs, cc, r = idx[~ok], xs[~ok], cc[~ok], r[~ok]
        if idx.size == 0:
            break
        D1 = np.einsum("pm,pmc->pc", monomial_derivs(xs, k, 1, 0), cc)
        D2 = np.einsum("pm,pmc->pc", monomial_derivs(xs, k, 0, 1), cc)
        det = D1[:, 0] * D2[:, 1] - D2[:, 0] * D1[:, 1]
        bad = np.abs(det) < 1e-300
        det = np.where(bad, 1.0, det)
        d0 = (D2[:, 1] * r[:, 0] - D2[:, 0] * r[:, 1]) / det
        d1 = (-D1[:, 1] * r[:, 0] + D1[:, 0] * r[:, 1]) / det
        step = np.hypot(d0, d1)
        xs = xs - np.stack([d0, d1], axis=1)
        xi[idx] = xs
        done[idx[(step <= 1e-14) & ~bad]] = True
        dead = bad | (np.abs(xs).max(axis=1) > 1e3)
        alive[idx[dead]] = False
    return xi, done & alive


def _seed(c, x, k):
    c00 = c[:, 0, :]
    c10 = c[:, 0 :: k + 1, :][:, : k + 1, :].sum(axis=1)
    c01 = c[:, : k + 1, :].sum(axis=1)
    a = c10 - c00
    b = c01 - c00
    rhs = x - c00
    det = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
    det = np.where(np.abs(det) < 1e-300, 1e-300, det)
    xi0 = (b[:, 1] * rhs[:, 0] - b[:, 0] * rhs[:, 1]) / det
    xi1 = (-a[:, 1] * rhs[:, 0] + a[:, 0] * rhs[:, 1]) / det
    return np.stack([xi0, xi1], axis=1)


def invert_maps(coef, kinds, ptr, cand, points, k, tol, tol_in, maxit):
    npts = len(points)
    counts = np.diff(ptr)
    owner = np.repeat(np.arange(npts), counts)
    regs = cand
    best = np.full(npts, -1, dtype=np.int64)
    best_xi = np.zeros((npts, 2))
    best_v = np.full(npts, np.inf)
    if regs.size == 0:
        return best, best_xi, best_v
    c = coef[regs]
    x = points[owner]
    xi = _seed(c, x, k)
    xi, conv = _newton(c, x, xi, tol, maxit, k)
    v = np.where(conv, _violation(xi, kinds[regs]), np.inf)
    # 8x8 reference-grid reseeding for points no candidate contains: the
    # affine seed may land on a spurious root of the polynomial map outside
    # the element
    hit = np.zeros(npts, dtype=bool)
    hit[owner[v <= tol_in]] = True
    fail = np.flatnonzero(~hit[owner])
    if fail.size:
        s = (np.arange(8) + 0.5) / 8
        S1, S2 = np.meshgrid(s, s, indexing="ij")
        seeds = np.stack([S1.ravel(), S2.ravel()], axis=1)
        cf, xf = c[fail], x[fail]
        M = monomials(seeds, k)
        vals = np.einsum("sm,pmc->psc", M, cf)
        err = np.linalg.norm(vals - xf[:, None, :], axis=2)
        tri = kinds[regs[fail]] != QUAD
        err[tri[:, None] & (seeds.sum(axis=1) > 1.0)[None, :]] = np.inf
        xi_f = seeds[np.argmin(err, axis=1)].copy()
        xi_f, conv_f = _newton(cf, xf, xi_f, tol, maxit, k)
        v_f = np.where(conv_f, _violation(xi_f, kinds[regs[fail]]), np.inf)
        better = v_f < v[fail]
        xi[fail[better]] = xi_f[better]
        v[fail[better]] = v_f[better]
    # first candidate (in candidate order) that is inside wins; else least violation
    inside = v <= tol_in
    key = np.where(inside, -1.0, v)
    order = np.lexsort((np.arange(len(regs)), key, owner))
    first = np.ones(len(order), dtype=bool)
    first[1:] = owner[order][1:] != owner[order][:-1]
    pick = order[first]
    po = owner[pick]
    good = np.isfinite(v[pick])
    best[po[good]] = regs[pick[good]]
    best_xi[po[good]] = xi[pick[good]]
    best_v[po[good]] = v[pick[good]]
    return best, best_xi, best_v


def closest_on_edges(coef, ptr, cand, points, k, maxit):
    """Closest point on the curved edge ``xi2 = 0`` of each candidate region."""
    npts = len(points)
    counts = np.diff(ptr)
    owner = np.repeat(np.arange(npts), counts)
    best = np.full(npts, -1, dtype=np.int64)
    best_s = np.zeros(npts)
    best_d = np.full(npts, np.inf)
    if cand.size == 0:
        return best, best_s, best_d
    e = coef[cand][:, 0 :: k + 1, :][:, : k + 1, :]  # coefficients of s**p on xi2 = 0
    x = points[owner]
    pw = np.arange(k + 1)

    def curve(s, der):
        if der == 0:
            B = s[:, None] ** pw
        elif der == 1:
            B = np.where(pw >= 1, pw * s[:, None] ** np.maximum(pw - 1, 0), 0.0)
        else:
            B = np.where(pw >= 2, pw * (pw - 1) * s[:, None] ** np.maximum(pw - 2, 0), 0.0)
        return np.einsum("pm,pmc->pc", B, e)

    samples = np.linspace(0.0, 1.0, 9)
    d2 = np.stack(
        [np.sum((curve(np.full(len(x), t), 0) - x) ** 2, axis=1) for t in samples], axis=1
    )
    s = samples[np.argmin(d2, axis=1)]
    for _ in range(maxit):
        r = curve(s, 0) - x
        t1 = curve(s, 1)
        t2 = curve(s, 2)
        f = np.sum(t1 * r, axis=1)
        fp = np.sum(t2 * r, axis=1) + np.sum(t1 * t1, axis=1)
        fp = np.where(fp <= 0, np.sum(t1 * t1, axis=1) + 1e-300, fp)
        ds = f / fp
        s = np.clip(s - ds, 0.0, 1.0)
        if np.all(np.abs(ds) < 1e-15):
            break
    d = np.linalg.norm(curve(s, 0) - x, axis=1)
    order = np.lexsort((np.arange(len(cand)), d, owner))
    first = np.ones(len(order), dtype=bool)
    first[1:] = owner[order][1:] != owner[order][:-1]
    pick = order[first]
    po = owner[pick]
    best[po] = cand[pick]
    best_s[po] = s[pick]
    best_d[po] = d[pick]
    return best, best_s, best_d
