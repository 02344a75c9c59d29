"""Boundary tracking: advect control points, adjust their spacing, refit the spline."""

from __future__ import annotations

import numpy as np

from .curves import BoundaryCurve, EllipseCurve, fit_spline
from .errors import CollapsedCurve


def initial_curve(shape: EllipseCurve, eta: float, delta: float = 0.01) -> BoundaryCurve:
    """Spline through points at equal arc length (spacing ``<= eta``) on the analytic shape."""
    return fit_spline(shape.equal_arc_points(eta), eta=eta, delta=delta)


def insertion_params(prev: BoundaryCurve, moved: np.ndarray, eta: float):
    """Per-gap insertion counts ``M_j - 1`` and the previous-curve parameters to insert."""
    nxt = np.roll(moved, -1, axis=0)
    gaps = np.linalg.norm(nxt - moved, axis=1)
    M = np.maximum(np.ceil(gaps / eta - 1e-12).astype(np.int64), 1)
    dl = np.diff(prev.knots) / M
    params = []
    for j in np.flatnonzero(M > 1):
        params.append(prev.knots[j] + dl[j] * np.arange(1, M[j]))
    return M - 1, (np.concatenate(params) if params else np.zeros(0))


def remove_close(points: np.ndarray, eta: float, delta: float) -> np.ndarray:
    """Greedy left-to-right removal of points closer than ``delta * eta`` to their predecessor.

    A point is removed only if the merged gap stays ``<= eta``; sweeps repeat
    until nothing changes.  The first point of every close run is kept.
    """
    pts = [p for p in points]
    lim = delta * eta
    changed = True
    while changed and len(pts) > 4:
        changed = False
        i = 0
        while i < len(pts) and len(pts) > 4:
            n = len(pts)
            j, l = (i + 1) % n, (i + 2) % n
            if j != 0 and np.linalg.norm(pts[j] - pts[i]) <= lim:
                if np.linalg.norm(pts[l] - pts[i]) <= eta:
                    del pts[j]
                    changed = True
                    continue
            i += 1
    return np.asarray(pts)


def track_surface(prev: BoundaryCurve, fwd, eta: float, delta: float = 0.01) -> BoundaryCurve:
    """One surface-tracking step driven by the forward map ``fwd`` (vectorized)."""
    P = np.asarray(fwd(prev.control_points))
    counts, params = insertion_params(prev, P, eta)
    if params.size:
        extra = np.asarray(fwd(prev.eval(params)))
        out = []
        pos = 0
        for j in range(len(P)):
            out.append(P[j : j + 1])
            c = counts[j]
            if c:
                out.append(extra[pos : pos + c])
                pos += c
        P = np.concatenate(out)
    P = remove_close(P, eta, delta)
    if len(P) < 4:
        raise CollapsedCurve("fewer than 4 control points remain", n_points=len(P))
    return fit_spline(P, eta=eta, delta=delta)


def spacing(curve: BoundaryCurve) -> np.ndarray:
    P = curve.control_points
    return np.linalg.norm(np.roll(P, -1, axis=0) - P, axis=1)
