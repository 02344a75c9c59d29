"""Uniform background grid over the hold-all box and per-step cell classification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
import shapely

from .curves import trace_arcs
from .errors import CurveOutsideDomain, SelfIntersection

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2
# shallow excursions of the domain across a grid line (relative depth) are
# attributed to the cell the curve returns to
CAP_DEPTH = 0.05


@dataclass(frozen=True)
class GridSpec:
    """``nx x ny`` squares of side ``h`` with lower-left corner ``origin``."""

    origin: tuple
    h: float
    nx: int
    ny: int

    @classmethod
    def box(cls, lo, hi, h):
        """Grid over ``[lo, hi]^2`` with ``h`` rounded so the box is tiled exactly."""
        n = int(round((hi - lo) / h))
        if not np.isclose(n * h, hi - lo, rtol=1e-12, atol=0.0):
            raise ValueError(f"box length {hi - lo} is not a multiple of h={h}")
        return cls((float(lo), float(lo)), float(h), n, n)

    @property
    def width(self) -> float:
        return self.nx * self.h

    @property
    def height(self) -> float:
        return self.ny * self.h

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_id(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def cell_ij(self, c):
        j, i = np.divmod(np.asarray(c), self.nx)
        return i, j

    def corner(self, c) -> np.ndarray:
        i, j = self.cell_ij(c)
        return np.stack(
            [self.origin[0] + self.h * i, self.origin[1] + self.h * j], axis=-1
        ).astype(float)

    def locate(self, x):
        """Cell indices ``(i, j)`` (unclipped) and local coordinates in [0, 1)."""
        x = np.asarray(x, dtype=float)
        s = (x - np.asarray(self.origin)) / self.h
        ij = np.floor(s).astype(np.int64)
        return ij, s - ij

    def contains(self, x, margin=0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        ox, oy = self.origin
        return (
            (x[:, 0] > ox + margin)
            & (x[:, 0] < ox + self.width - margin)
            & (x[:, 1] > oy + margin)
            & (x[:, 1] < oy + self.height - margin)
        )


@dataclass
class MeshClassification:
    """Cell classes for one time level.

    ``ghost_edges`` rows are ``(cell_a, cell_b, axis)`` where ``cell_b`` is the
    right (``axis == 0``) or upper (``axis == 1``) neighbour of ``cell_a``.
    """

    grid: GridSpec
    status: np.ndarray
    cut: np.ndarray
    ghost_edges: np.ndarray
    arcs: list = field(repr=False, default_factory=list)
    step: int = 0

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.status == INTERIOR)

    @property
    def boundary_zone(self) -> np.ndarray:
        return np.flatnonzero(self.status == BOUNDARY)

    @property
    def cover(self) -> np.ndarray:
        return np.flatnonzero(self.status != EXTERIOR)

    def to_json(self) -> dict:
        return {
            "step": int(self.step),
            "grid": {
                "origin": list(self.grid.origin),
                "h": self.grid.h,
                "nx": self.grid.nx,
                "ny": self.grid.ny,
            },
            "interior": self.interior.tolist(),
            "boundary_zone": self.boundary_zone.tolist(),
            "cut": self.cut.tolist(),
            "ghost_edges": self.ghost_edges.tolist(),
        }


def _dense_samples(curve, per_h, h):
    n = max(256, int(np.ceil(curve_length_estimate(curve) * per_h / h)))
    t = np.arange(n) * (curve.period / n)
    return t, curve.eval(t)


def curve_length_estimate(curve) -> float:
    t = np.linspace(0.0, curve.period, 2049)
    p = curve.eval(t)
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))


def check_curve(grid: GridSpec, curve, offset: float = 0.0) -> None:
    """Raise if the curve (or its outward offset) leaves the box or self-intersects."""
    t, pts = _dense_samples(curve, 16, grid.h)
    cps = getattr(curve, "control_points", None)
    probe = pts if cps is None else np.vstack([pts, cps])
    if offset > 0.0:
        probe = np.vstack([probe, pts + offset * curve.normal(t)])
    bad = ~grid.contains(probe)
    if np.any(bad):
        raise CurveOutsideDomain(
            "boundary curve leaves the background box",
            first_point=probe[np.argmax(bad)].tolist(),
        )
    if not shapely.LinearRing(pts).is_simple:
        raise SelfIntersection("boundary curve self-intersects", n_samples=len(pts))


def classify(grid: GridSpec, curve, step: int = 0, check: bool = True) -> MeshClassification:
    """Interior, boundary-zone and exterior cells plus ghost-penalty edges.

    Cut cells are those whose open interior meets the curve.  Interior cells
    are uncut cells whose centre lies inside.  The cover adds every cell hit by
    the band ``chi(t) + d n(t)``, ``0 < d <= h/4``, sampled at spacing ``h/16``
    along the curve and ``h/32`` across it.
    """
    h = grid.h
    if check:
        check_curve(grid, curve, offset=0.25 * h)
    arcs = trace_arcs(curve, grid.origin, h, grid.nx, grid.ny, cap=CAP_DEPTH)
    status = np.zeros(grid.n_cells, dtype=np.int8)
    cut = np.unique([grid.cell_id(*a.cell) for a in arcs]).astype(np.int64)

    uncut = np.ones(grid.n_cells, dtype=bool)
    uncut[cut] = False
    cand = np.flatnonzero(uncut)
    # only rows/columns spanned by the curve can hold interior cells
    box = curve.sample(512)
    lo = np.floor((box.min(axis=0) - grid.origin) / h).astype(int) - 1
    hi = np.ceil((box.max(axis=0) - grid.origin) / h).astype(int) + 1
    ci, cj = grid.cell_ij(cand)
    cand = cand[(ci >= lo[0]) & (ci <= hi[0]) & (cj >= lo[1]) & (cj <= hi[1])]
    centers = grid.corner(cand) + 0.5 * h
    inside = curve.contains(centers)
    status[cand[inside]] = INTERIOR

    t, _ = _dense_samples(curve, 16, h)
    d = 0.25 * h * np.arange(1, 9) / 8.0
    band = curve.eval(t)[:, None, :] + d[None, :, None] * curve.normal(t)[:, None, :]
    ij, _ = grid.locate(band.reshape(-1, 2))
    ok = (ij[:, 0] >= 0) & (ij[:, 0] < grid.nx) & (ij[:, 1] >= 0) & (ij[:, 1] < grid.ny)
    band_cells = np.unique(grid.cell_id(ij[ok, 0], ij[ok, 1]))
    zone = np.union1d(cut, band_cells)
    zone = zone[status[zone] != INTERIOR]
    status[zone] = BOUNDARY

    return MeshClassification(grid, status, cut, ghost_edges(grid, status), arcs, step)


def ghost_edges(grid: GridSpec, status: np.ndarray) -> np.ndarray:
    S = status.reshape(grid.ny, grid.nx)
    rows = []
    # vertical edges between (i, j) and (i + 1, j)
    a, b = S[:, :-1], S[:, 1:]
    m = (a != EXTERIOR) & (b != EXTERIOR) & ((a == BOUNDARY) | (b == BOUNDARY))
    j, i = np.nonzero(m)
    c = grid.cell_id(i, j)
    rows.append(np.stack([c, c + 1, np.zeros_like(c)], axis=1))
    a, b = S[:-1, :], S[1:, :]
    m = (a != EXTERIOR) & (b != EXTERIOR) & ((a == BOUNDARY) | (b == BOUNDARY))
    j, i = np.nonzero(m)
    c = grid.cell_id(i, j)
    rows.append(np.stack([c, c + grid.nx, np.ones_like(c)], axis=1))
    E = np.concatenate(rows).astype(np.int64)
    return E[np.lexsort((E[:, 2], E[:, 1], E[:, 0]))]


def fictitious_boundary(cls: MeshClassification) -> np.ndarray:
    """Grid edges on the boundary of the union of cover cells.

    Rows are ``(cell, side)`` with side 0/1/2/3 = left/right/bottom/top of a cover cell.
    """
    grid = cls.grid
    C = np.pad((cls.status != EXTERIOR).reshape(grid.ny, grid.nx), 1)
    core = C[1:-1, 1:-1]
    out = []
    for side, nb in enumerate(
        [C[1:-1, :-2], C[1:-1, 2:], C[:-2, 1:-1], C[2:, 1:-1]]
    ):
        j, i = np.nonzero(core & ~nb)
        c = grid.cell_id(i, j)
        out.append(np.stack([c, np.full_like(c, side)], axis=1))
    E = np.concatenate(out).astype(np.int64)
    return E[np.lexsort((E[:, 1], E[:, 0]))]


def cover_components(cls: MeshClassification) -> int:
    grid = cls.grid
    _, n = ndimage.label((cls.status != EXTERIOR).reshape(grid.ny, grid.nx))
    return int(n)
