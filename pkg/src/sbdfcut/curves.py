"""Closed parametric curves: the periodic chord-length cubic spline and analytic ellipses.

Both curve types expose the same duck-typed surface used by the grid and cut
geometry code:

* ``period`` -- parameter length of one loop,
* ``eval(t)``, ``deriv(t, order)`` -- vectorized, periodic in ``t``,
* ``breakpoints`` -- sorted parameters (``0`` ... ``period``) between which both
  coordinates are monotone,
* ``split_params`` -- parameters of the control points (empty for analytic curves),
* ``area()`` -- signed enclosed area, positive for counterclockwise loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import DegenerateCurve
from .polybasis import gauss_1d

_EPS = np.finfo(float).eps


class _CurveOps:
    period: float

    def wrap(self, t):
        return np.mod(t, self.period)

    def normal(self, t):
        """Unit outward normal (right of the tangent for counterclockwise loops)."""
        d = self.deriv(t)
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def sample(self, n: int) -> np.ndarray:
        return self.eval(np.arange(n) * (self.period / n))

    def contains(self, points) -> np.ndarray:
        """Even-odd point-in-curve test with a +x ray, exact up to root finding."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ys, inv = np.unique(points[:, 1], return_inverse=True)
        t, row = _line_roots(self, 0.0, self.period, 1, ys, half_open=True)
        xs = self.eval(t)[:, 0] if t.size else np.zeros(0)
        order = np.lexsort((xs, row))
        xs, row = xs[order], row[order]
        starts = np.searchsorted(row, np.arange(len(ys)))
        ends = np.searchsorted(row, np.arange(len(ys)), side="right")
        out = np.zeros(len(points), dtype=bool)
        for r in range(len(ys)):
            sel = np.flatnonzero(inv == r)
            if sel.size == 0 or starts[r] == ends[r]:
                continue
            seg = xs[starts[r] : ends[r]]
            n_right = len(seg) - np.searchsorted(seg, points[sel, 0], side="right")
            out[sel] = (n_right % 2) == 1
        return out


@dataclass(frozen=True, eq=False)
class BoundaryCurve(_CurveOps):
    """Closed C2 cubic spline through ordered control points with chord-length knots.

    ``coef[j, p]`` holds the coefficient of ``(l - knots[j])**p`` on segment ``j``.
    """

    control_points: np.ndarray
    knots: np.ndarray
    coef: np.ndarray
    eta: float | None = None
    delta: float = 0.01
    _breaks: np.ndarray = field(default=None, repr=False)

    @property
    def total_length(self) -> float:
        return float(self.knots[-1])

    @property
    def period(self) -> float:
        return float(self.knots[-1])

    @property
    def n_points(self) -> int:
        return len(self.control_points)

    @property
    def split_params(self) -> np.ndarray:
        return self.knots[:-1]

    def _locate(self, t):
        t = np.mod(np.asarray(t, dtype=float), self.period)
        seg = np.searchsorted(self.knots, t, side="right") - 1
        seg = np.clip(seg, 0, len(self.coef) - 1)
        return seg, t - self.knots[seg]

    def eval(self, t):
        seg, s = self._locate(t)
        c = self.coef[seg]
        s = s[..., None]
        return ((c[..., 3, :] * s + c[..., 2, :]) * s + c[..., 1, :]) * s + c[..., 0, :]

    def deriv(self, t, order: int = 1):
        seg, s = self._locate(t)
        c = self.coef[seg]
        s = s[..., None]
        if order == 1:
            return (3.0 * c[..., 3, :] * s + 2.0 * c[..., 2, :]) * s + c[..., 1, :]
        if order == 2:
            return 6.0 * c[..., 3, :] * s + 2.0 * c[..., 2, :]
        if order == 3:
            return 6.0 * c[..., 3, :] + 0.0 * s
        return np.zeros_like(c[..., 0, :] * s)

    @property
    def breakpoints(self) -> np.ndarray:
        if self._breaks is None:
            extra = []
            lengths = np.diff(self.knots)
            for j, c in enumerate(self.coef):
                for d in range(2):
                    # x'(s) = c1 + 2 c2 s + 3 c3 s^2
                    r = np.roots([3.0 * c[3, d], 2.0 * c[2, d], c[1, d]]) if (
                        abs(c[3, d]) + abs(c[2, d]) > 0
                    ) else np.zeros(0)
                    r = r[np.isreal(r)].real
                    r = r[(r > 1e-12 * lengths[j]) & (r < lengths[j] * (1 - 1e-12))]
                    extra.extend(self.knots[j] + r)
            b = np.unique(np.concatenate([self.knots, np.asarray(extra, dtype=float)]))
            object.__setattr__(self, "_breaks", b)
        return self._breaks

    def area(self) -> float:
        return curve_area(self)

    def to_json(self, n_dense: int = 0) -> dict:
        out = {
            "control_points": self.control_points.tolist(),
            "knots": self.knots.tolist(),
            "total_length": self.total_length,
        }
        if n_dense:
            out["samples"] = self.sample(n_dense).tolist()
        return out


@dataclass(frozen=True, eq=False)
class EllipseCurve(_CurveOps):
    """Axis-aligned ellipse ``c + (a cos t, b sin t)``; a circle when ``a == b``."""

    center: tuple
    a: float
    b: float

    period = 2.0 * np.pi
    split_params = np.zeros(0)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack(
            [self.center[0] + self.a * np.cos(t), self.center[1] + self.b * np.sin(t)], axis=-1
        )

    def deriv(self, t, order: int = 1):
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        k = order % 4
        dx = [c, -s, -c, s][k] * self.a
        dy = [s, c, -s, -c][k] * self.b
        return np.stack([dx, dy], axis=-1)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, 2.0 * np.pi, 65)

    def speed(self, t):
        return np.hypot(self.a * np.sin(t), self.b * np.cos(t))

    def arc_length(self, t0: float = 0.0, t1: float = 2.0 * np.pi) -> float:
        val, _ = integrate.quad(self.speed, t0, t1, epsabs=1e-14, epsrel=1e-13, limit=200)
        return val

    def area(self) -> float:
        return float(np.pi * self.a * self.b)

    def equal_arc_points(self, eta: float) -> np.ndarray:
        """Points at equal arc length ``L / J`` with ``J = ceil(L / eta)``, starting at ``t = 0``."""
        L = self.arc_length()
        J = max(4, int(np.ceil(L / eta - 1e-12)))
        targets = np.arange(J) * (L / J)
        ts = np.zeros(J)
        t = 0.0
        s_prev, t_prev = 0.0, 0.0
        for j in range(1, J):
            t = t_prev + (targets[j] - s_prev) / self.speed(t_prev)
            for _ in range(50):
                s = s_prev + self.arc_length(t_prev, t)
                dt = (targets[j] - s) / self.speed(t)
                t += dt
                if abs(dt) < 1e-15:
                    break
            ts[j] = t
            s_prev = s_prev + self.arc_length(t_prev, t)
            t_prev = t
        return self.eval(ts)


def fit_spline(points, eta: float | None = None, delta: float = 0.01) -> BoundaryCurve:
    """Periodic cubic spline through ``points`` (closed loop) with chord-length knots."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or len(P) < 4:
        raise DegenerateCurve("a closed spline needs at least 4 points", n_points=len(P))
    closed = np.vstack([P, P[:1]])
    chords = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    if chords.sum() < 10 * _EPS or np.any(chords == 0.0):
        raise DegenerateCurve("coincident consecutive control points or zero length")
    knots = np.concatenate([[0.0], np.cumsum(chords)])
    cs = CubicSpline(knots, closed, bc_type="periodic")
    coef = np.transpose(cs.c[::-1], (1, 0, 2)).copy()  # (J, 4, 2), ascending powers
    return BoundaryCurve(P.copy(), knots, coef, eta=eta, delta=delta)


def curve_area(curve) -> float:
    """Signed area by Green's theorem; exact for the spline (degree-5 integrand per segment)."""
    if isinstance(curve, EllipseCurve):
        return curve.area()
    x, w = gauss_1d(4)
    a, b = curve.knots[:-1], curve.knots[1:]
    t = a[:, None] + (b - a)[:, None] * x[None, :]
    p = curve.eval(t)
    d = curve.deriv(t)
    f = p[..., 0] * d[..., 1] - p[..., 1] * d[..., 0]
    return float(0.5 * np.sum((b - a)[:, None] * w[None, :] * f))


def arc_integral(curve, t0, t1, fn, n: int = 8):
    """Gauss rule for ``int fn(chi(t), chi'(t)) dt`` on each ``[t0, t1]`` interval."""
    x, w = gauss_1d(n)
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    t1 = np.atleast_1d(np.asarray(t1, dtype=float))
    t = t0[:, None] + (t1 - t0)[:, None] * x[None, :]
    vals = fn(curve.eval(t), curve.deriv(t))
    return np.sum((t1 - t0)[:, None] * w[None, :] * vals, axis=1)


# --------------------------------------------------------------------------
# grid-line crossings


def _pieces(curve, t_lo, t_hi):
    b = curve.breakpoints
    P = curve.period
    # breakpoints shifted into [t_lo, t_hi] (t_hi may exceed one period)
    shifts = np.arange(np.floor(t_lo / P) - 1, np.ceil(t_hi / P) + 1)
    allb = (b[None, :] + P * shifts[:, None]).ravel()
    inner = allb[(allb > t_lo) & (allb < t_hi)]
    edges = np.unique(np.concatenate([[t_lo], inner, [t_hi]]))
    return edges[:-1], edges[1:]


def _bisect(curve, a, b, axis, target, iters=64):
    if isinstance(curve, BoundaryCurve):
        return _bisect_segment(curve, a, b, axis, target, iters)
    ga = curve.eval(a)[:, axis] - target
    for _ in range(iters):
        m = 0.5 * (a + b)
        gm = curve.eval(m)[:, axis] - target
        left = np.sign(gm) == np.sign(ga)
        a = np.where(left, m, a)
        ga = np.where(left, gm, ga)
        b = np.where(left, b, m)
    return 0.5 * (a + b)


def _bisect_segment(curve, a, b, axis, target, iters):
    """Bisection on one cubic segment per bracket (brackets never straddle a knot)."""
    seg, _ = curve._locate(0.5 * (a + b))
    c = curve.coef[seg, :, axis]
    base = curve.knots[seg]
    # local offsets of the bracket ends, shifted by whole periods as needed
    shift = np.floor((0.5 * (a + b) - base) / curve.period) * curve.period
    lo, hi = a - shift - base, b - shift - base

    def g(s):
        return ((c[:, 3] * s + c[:, 2]) * s + c[:, 1]) * s + c[:, 0] - target

    glo = g(lo)
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        gm = g(m)
        left = np.sign(gm) == np.sign(glo)
        lo = np.where(left, m, lo)
        glo = np.where(left, gm, glo)
        hi = np.where(left, hi, m)
    return 0.5 * (lo + hi) + base + shift


def _line_roots(curve, t_lo, t_hi, axis, values, half_open=False):
    """Roots of ``chi(t)[axis] = values[r]`` for ``t`` in ``[t_lo, t_hi]``.

    Returns ``(t, r)`` arrays.  With ``half_open`` a root at a piece endpoint is
    counted with the ray-casting convention (lower endpoint inclusive) so that
    crossings at shared breakpoints are counted once.
    """
    values = np.asarray(values, dtype=float)
    a, b = _pieces(curve, t_lo, t_hi)
    if a.size == 0 or values.size == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    ca = curve.eval(a)[:, axis]
    cb = curve.eval(b)[:, axis]
    lo = np.minimum(ca, cb)
    hi = np.maximum(ca, cb)
    order = np.argsort(values)
    sv = values[order]
    if half_open:
        i0 = np.searchsorted(sv, lo, side="left")
        i1 = np.searchsorted(sv, hi, side="left")
    else:
        i0 = np.searchsorted(sv, lo, side="left")
        i1 = np.searchsorted(sv, hi, side="right")
    cnt = np.maximum(i1 - i0, 0)
    piece = np.repeat(np.arange(len(a)), cnt)
    if piece.size == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    offs = np.arange(piece.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    vidx = order[i0[piece] + offs]
    target = values[vidx]
    pa, pb = a[piece], b[piece]
    # orient so that coordinate increases from pa to pb
    flip = ca[piece] > cb[piece]
    lo_t = np.where(flip, pb, pa)
    hi_t = np.where(flip, pa, pb)
    t = _bisect(curve, lo_t.copy(), hi_t.copy(), axis, target)
    # exact hits at endpoints
    t = np.where(ca[piece] == target, pa, t)
    t = np.where(cb[piece] == target, pb, t)
    return t, vidx


@dataclass
class Arc:
    """Maximal piece of the curve inside one square, ``t0 < t1`` (``t1`` may pass ``period``)."""

    cell: tuple
    t0: float
    t1: float


def trace_arcs(curve, origin, spacing, nx, ny, intervals=None, tiny=1e-9, cap=0.0):
    """Split the curve into arcs, one per visit of a grid square.

    ``intervals`` restricts the trace to parameter intervals (non-periodic);
    by default the full closed curve is traced and the wrap-around arc merged.
    Arcs whose chord is below ``tiny * spacing`` are dropped so that grazing
    contacts and corner passages do not create spurious cells.
    """
    ox, oy = origin
    periodic = intervals is None
    if periodic:
        intervals = [(0.0, curve.period)]
    arcs: list[Arc] = []
    for t_lo, t_hi in intervals:
        tx, _ = _line_roots(curve, t_lo, t_hi, 0, ox + spacing * np.arange(nx + 1))
        ty, _ = _line_roots(curve, t_lo, t_hi, 1, oy + spacing * np.arange(ny + 1))
        ev = np.unique(np.concatenate([[t_lo], tx, ty, [t_hi]]))
        ev = ev[(ev >= t_lo) & (ev <= t_hi)]
        tol = 1e-13 * max(curve.period, 1.0)
        keep = np.concatenate([[True], np.diff(ev) > tol])
        ev = ev[keep]
        if ev[-1] < t_hi - tol:
            ev = np.append(ev, t_hi)
        ev[-1] = t_hi
        ev[0] = t_lo
        mids = 0.5 * (ev[:-1] + ev[1:])
        pm = curve.eval(mids)
        ci = np.floor((pm[:, 0] - ox) / spacing).astype(int)
        cj = np.floor((pm[:, 1] - oy) / spacing).astype(int)
        p0 = curve.eval(ev[:-1])
        p1 = curve.eval(ev[1:])
        chord = np.linalg.norm(p1 - p0, axis=1)
        depth = np.full(len(mids), np.inf)
        if cap > 0:
            depth = _cap_depth(curve, ev, p0, p1, (ox, oy), spacing)
        pieces = []
        for n in range(len(mids)):
            pieces.append(
                [(int(ci[n]), int(cj[n])), float(ev[n]), float(ev[n + 1]), chord[n], depth[n]]
            )
        pieces = _merge_pieces(pieces, tiny * spacing, periodic, cap * spacing)
        for cell, a, b, *_ in pieces:
            if 0 <= cell[0] < nx and 0 <= cell[1] < ny:
                arcs.append(Arc(cell, a, b))
    return arcs


def _cap_depth(curve, ev, p0, p1, origin, spacing, samples=17):
    """Largest distance from the grid line for pieces that leave and re-enter across one line.

    Only caps that enclose part of the domain qualify; pieces whose two ends do
    not lie on a common grid line, or whose cap lies outside, get ``inf``.
    """
    depth = np.full(len(p0), np.inf)
    s = np.linspace(0.0, 1.0, samples)
    for a in (0, 1):
        g0 = (p0[:, a] - origin[a]) / spacing
        g1 = (p1[:, a] - origin[a]) / spacing
        line = np.round(g0)
        same = (np.abs(g0 - line) < 1e-9) & (np.abs(g1 - line) < 1e-9)
        for n in np.flatnonzero(same):
            t = ev[n] + s * (ev[n + 1] - ev[n])
            pts = curve.eval(t)
            off = pts[:, a] - (origin[a] + line[n] * spacing)
            i = int(np.argmax(np.abs(off)))
            probe = pts[i].copy()
            probe[a] -= 0.5 * off[i]
            if curve.contains(probe[None, :])[0]:
                depth[n] = min(depth[n], abs(off[i]))
    return depth


def _merge_pieces(pieces, min_chord, periodic, max_cap=0.0):
    """Merge consecutive pieces in one cell, drop tiny pieces and shallow caps.

    A cap is a piece that crosses a grid line and comes straight back, staying
    within ``max_cap`` of the line; it is absorbed into the arc on the other
    side when that arc continues in the same cell.
    """

    def merge_same(ps):
        out = []
        for p in ps:
            if out and out[-1][0] == p[0]:
                out[-1][2] = p[2]
                out[-1][3] = out[-1][3] + p[3]
                out[-1][4] = np.inf
            else:
                out.append(list(p))
        return out

    def is_cap(ps, n):
        if ps[n][4] > max_cap or len(ps) < 3:
            return False
        m = len(ps)
        if not periodic and (n == 0 or n == m - 1):
            return False
        return ps[(n - 1) % m][0] == ps[(n + 1) % m][0]

    ps = merge_same(pieces)
    changed = True
    while changed and len(ps) > 1:
        changed = False
        for n, p in enumerate(ps):
            if is_cap(ps, n):
                m = len(ps)
                prev, nxt = (n - 1) % m, (n + 1) % m
                if 0 < n < m - 1:
                    ps[prev][2] = ps[nxt][2]
                    ps[prev][3] += p[3] + ps[nxt][3]
                    ps[prev][4] = np.inf
                    del ps[n : n + 2]
                else:
                    # cap at the periodic seam: glue it to its wrap-around neighbour
                    if n == 0:
                        ps[nxt][1] = p[1]
                    else:
                        ps[prev][2] = p[2]
                    del ps[n]
                ps = merge_same(ps)
                changed = True
                break
            if p[3] < min_chord and len(ps) > 1:
                if n > 0:
                    ps[n - 1][2] = p[2]
                elif n + 1 < len(ps):
                    ps[n + 1][1] = p[1]
                del ps[n]
                ps = merge_same(ps)
                changed = True
                break
    if periodic and len(ps) > 1 and ps[0][0] == ps[-1][0]:
        # the wrapped arc runs from the last piece's start to the first piece's end + period
        period = pieces[-1][2] - pieces[0][1]
        last = ps.pop()
        ps[0] = [ps[0][0], last[1], ps[0][2] + period, ps[0][3] + last[3], np.inf]
    return ps
