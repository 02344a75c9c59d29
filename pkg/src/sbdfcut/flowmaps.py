"""Discrete forward map, per-step patch maps and their inversion (backward maps).

A :class:`PatchMap` is a list of isoparametric pieces ``(F, G)`` over reference
squares/triangles: ``F`` parametrizes an interior cell or a cut region of the
previous level, ``G`` interpolates the forward images of the same lattice.
The backward map evaluates ``F(G^{-1}(x))``.  Points slightly outside the
image domain use the polynomial pieces extrapolated (across a curved edge) or
clamped (across a straight seam); points farther out are first projected onto
the nearest curved image edge (constant extension along the normal).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FoldedPatch, HistoryMissing, NoRegionFound
from .geometry import StepGeometry, node_count, uniform_lattice
from .grid import GridSpec
from .kernels import closest_on_edges, eval_poly, eval_poly_jac, invert_maps
from .polybasis import QUAD, sample_points, to_monomial

TOL_INSIDE = 1e-10  # reference-coordinate violation accepted as inside
TOL_GAP = 0.05  # reference-coordinate layer handled without closest-point projection
MAXIT = 50


@dataclass
class PatchMap:
    """Pieces of one step's map from level ``n-1`` to level ``n``."""

    grid: GridSpec
    k: int
    kind: np.ndarray
    parent: np.ndarray
    curved: np.ndarray
    Fcoef: np.ndarray
    Gcoef: np.ndarray
    Fnodes: np.ndarray = field(repr=False)
    Gnodes: np.ndarray = field(repr=False)
    hash_ptr: np.ndarray = field(repr=False, default=None)
    hash_idx: np.ndarray = field(repr=False, default=None)
    edge_ptr: np.ndarray = field(repr=False, default=None)
    edge_idx: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.kind)

    def image_area(self) -> float:
        return _area(self.Gcoef, self.kind, self.k)

    def source_area(self) -> float:
        return _area(self.Fcoef, self.kind, self.k)

    def to_json(self) -> list:
        out = []
        for r in range(len(self)):
            n = node_count(int(self.kind[r]), self.k)
            out.append(
                {
                    "parent": int(self.parent[r]),
                    "kind": "quad" if self.kind[r] == QUAD else "triangle",
                    "F_nodes": self.Fnodes[r, :n].tolist(),
                    "G_nodes": self.Gnodes[r, :n].tolist(),
                }
            )
        return out


def _area(coef, kind, k):
    from .polybasis import element_rule

    total = 0.0
    for kd in (0, 1):
        sel = np.flatnonzero(kind == kd)
        if sel.size == 0:
            continue
        xi, w = element_rule(kd, k)
        ids = np.repeat(sel, len(w))
        _, J = eval_poly_jac(coef, ids, np.tile(xi, (len(sel), 1)), k)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        total += float(np.sum(det * np.tile(w, len(sel))))
    return total


def source_pieces(geo: StepGeometry):
    """``(kind, parent, curved, nodes)`` of all pieces of a level: interior cells then cut regions."""
    k = geo.k
    cells = geo.interior
    n = (k + 1) ** 2
    kinds = [np.full(len(cells), QUAD, dtype=np.int64), geo.regions.kind]
    parents = [cells.astype(np.int64), geo.regions.parent]
    curved = [np.zeros(len(cells), dtype=bool), geo.regions.curved]
    nodes = [uniform_lattice(geo.grid, cells, k).reshape(len(cells), n, 2), geo.regions.nodes]
    return (
        np.concatenate(kinds),
        np.concatenate(parents),
        np.concatenate(curved),
        np.concatenate(nodes),
    )


def lattice_points(nodes, kind, k):
    """Unique lattice points (NaN padding dropped) and the inverse index."""
    n_valid = np.where(kind == QUAD, (k + 1) ** 2, (k + 1) * (k + 2) // 2)
    mask = np.arange(nodes.shape[1])[None, :] < n_valid[:, None]
    pts = nodes[mask]
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    return uniq, inv.ravel(), mask


def build_patch_map(geo: StepGeometry, fwd, check=True) -> PatchMap:
    """Trace every lattice node of level ``n-1`` forward with ``fwd`` and build ``G``."""
    k = geo.k
    kind, parent, curved, Fnodes = source_pieces(geo)
    uniq, inv, mask = lattice_points(Fnodes, kind, k)
    images = np.asarray(fwd(uniq))
    Gnodes = np.full_like(Fnodes, np.nan)
    Gnodes[mask] = images[inv]
    return make_patch_map(geo.grid, k, kind, parent, curved, Fnodes, Gnodes, check=check)


def make_patch_map(grid, k, kind, parent, curved, Fnodes, Gnodes, check=True) -> PatchMap:
    R = len(kind)
    Fcoef = np.zeros((R, (k + 1) ** 2, 2))
    Gcoef = np.zeros_like(Fcoef)
    for kd in (0, 1):
        sel = np.flatnonzero(kind == kd)
        if sel.size == 0:
            continue
        n = node_count(kd, k)
        Fcoef[sel] = to_monomial(Fnodes[sel, :n], kd, k)
        Gcoef[sel] = to_monomial(Gnodes[sel, :n], kd, k)
    pm = PatchMap(grid, k, kind, parent, curved, Fcoef, Gcoef, Fnodes, Gnodes)
    if check:
        check_orientation(pm)
    _build_hash(pm)
    return pm


def check_orientation(pm: PatchMap) -> None:
    k = pm.k
    for kd in (0, 1):
        sel = np.flatnonzero(pm.kind == kd)
        if sel.size == 0:
            continue
        xi = sample_points(kd, k + 2)
        ids = np.repeat(sel, len(xi))
        _, J = eval_poly_jac(pm.Gcoef, ids, np.tile(xi, (len(sel), 1)), k)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0):
            bad = ids[np.argmin(det)]
            raise FoldedPatch(
                "image patch has nonpositive Jacobian",
                piece=int(bad),
                parent=int(pm.parent[bad]),
                min_det=float(det.min()),
            )


def _bbox_csr(grid, lo, hi):
    """CSR lists of box indices per grid cell for boxes ``[lo, hi]``."""
    h = grid.h
    i0 = np.clip(np.floor((lo[:, 0] - grid.origin[0]) / h).astype(np.int64), 0, grid.nx - 1)
    i1 = np.clip(np.floor((hi[:, 0] - grid.origin[0]) / h).astype(np.int64), 0, grid.nx - 1)
    j0 = np.clip(np.floor((lo[:, 1] - grid.origin[1]) / h).astype(np.int64), 0, grid.ny - 1)
    j1 = np.clip(np.floor((hi[:, 1] - grid.origin[1]) / h).astype(np.int64), 0, grid.ny - 1)
    cells, owners = [], []
    for r in range(len(lo)):
        ii, jj = np.meshgrid(np.arange(i0[r], i1[r] + 1), np.arange(j0[r], j1[r] + 1))
        c = (jj * grid.nx + ii).ravel()
        cells.append(c)
        owners.append(np.full(len(c), r, dtype=np.int64))
    if not cells:
        return np.zeros(grid.n_cells + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    cells = np.concatenate(cells)
    owners = np.concatenate(owners)
    order = np.lexsort((owners, cells))
    cells, owners = cells[order], owners[order]
    ptr = np.zeros(grid.n_cells + 1, dtype=np.int64)
    np.add.at(ptr, cells + 1, 1)
    return np.cumsum(ptr), owners


def _build_hash(pm: PatchMap) -> None:
    k = pm.k
    R = len(pm)
    h = pm.grid.h
    lo = np.zeros((R, 2))
    hi = np.zeros((R, 2))
    elo = np.zeros((R, 2))
    ehi = np.zeros((R, 2))
    s = np.linspace(0.0, 1.0, 2 * k + 2)
    for kd in (0, 1):
        sel = np.flatnonzero(pm.kind == kd)
        if sel.size == 0:
            continue
        xi = sample_points(kd, 2 * k + 2)
        ids = np.repeat(sel, len(xi))
        P = eval_poly(pm.Gcoef, ids, np.tile(xi, (len(sel), 1)), k).reshape(len(sel), len(xi), 2)
        lo[sel] = P.min(axis=1)
        hi[sel] = P.max(axis=1)
        e = np.stack([s, np.zeros_like(s)], axis=1)
        ids = np.repeat(sel, len(s))
        E = eval_poly(pm.Gcoef, ids, np.tile(e, (len(sel), 1)), k).reshape(len(sel), len(s), 2)
        elo[sel] = E.min(axis=1)
        ehi[sel] = E.max(axis=1)
    pad = 0.1 * h
    pm.hash_ptr, pm.hash_idx = _bbox_csr(pm.grid, lo - pad, hi + pad)
    cv = np.flatnonzero(pm.curved)
    eptr, eidx = _bbox_csr(pm.grid, elo[cv] - h, ehi[cv] + h)
    pm.edge_ptr, pm.edge_idx = eptr, cv[eidx] if eidx.size else eidx


def _candidates(ptr, idx, grid, x):
    ij, _ = grid.locate(x)
    ok = (ij[:, 0] >= 0) & (ij[:, 0] < grid.nx) & (ij[:, 1] >= 0) & (ij[:, 1] < grid.ny)
    cell = np.where(ok, grid.cell_id(ij[:, 0], ij[:, 1]), 0)
    start = np.where(ok, ptr[cell], 0)
    count = np.where(ok, ptr[cell + 1] - ptr[cell], 0)
    cptr = np.concatenate([[0], np.cumsum(count)]).astype(np.int64)
    offs = np.arange(cptr[-1]) - np.repeat(cptr[:-1], count)
    cand = idx[np.repeat(start, count) + offs] if cptr[-1] else np.zeros(0, np.int64)
    return cptr, cand.astype(np.int64)


def _violation_sides(xi, kind):
    """Largest violation and whether it is across the curved edge ``xi2 = 0``."""
    a, b = xi[:, 0], xi[:, 1]
    v_curved = -b
    other = np.where(
        kind == QUAD,
        np.maximum.reduce([-a, a - 1.0, b - 1.0]),
        np.maximum(-a, a + b - 1.0),
    )
    return v_curved, other


def _clamp(xi, kind):
    out = np.clip(xi, 0.0, 1.0)
    tri = kind != QUAD
    s = out[:, 0] + out[:, 1]
    over = tri & (s > 1.0)
    out[over] /= s[over, None]
    return out


@dataclass
class BackwardStats:
    inside: int = 0
    clamped: int = 0
    extended: int = 0
    extrapolated: int = 0

    def add(self, other):
        self.inside += other.inside
        self.clamped += other.clamped
        self.extended += other.extended
        self.extrapolated += other.extrapolated


class BackwardMap:
    """``X^{n,n-1}``: inverse of the patch map, extended constantly along normals outside."""

    def __init__(self, pm: PatchMap):
        self.pm = pm
        self.stats = BackwardStats()

    def locate(self, x):
        """Piece index and reference coordinates ``(r, xi)`` whose image contains (or is nearest to) ``x``."""
        pm = self.pm
        k = pm.k
        x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
        ptr, cand = _candidates(pm.hash_ptr, pm.hash_idx, pm.grid, x)
        best, xi, v = invert_maps(
            pm.Gcoef, pm.kind, ptr, cand, x, k, 1e-13 * pm.grid.h, TOL_INSIDE, MAXIT
        )
        r = best.copy()
        out_xi = xi.copy()
        inside = (best >= 0) & (v <= TOL_INSIDE)
        kind = pm.kind[np.maximum(best, 0)]
        vc, vo = _violation_sides(xi, kind)
        through_curved = pm.curved[np.maximum(best, 0)] & (vc >= vo) & (vc > TOL_INSIDE)
        near = (best >= 0) & ~inside & (v <= TOL_GAP)
        gap = near & ~through_curved
        out_xi[gap] = _clamp(xi[gap], kind[gap])
        # just beyond a curved edge the polynomial map is extrapolated: smooth,
        # and exact whenever the patch map reproduces the flow
        thin = near & through_curved
        ext = ~(inside | near)
        stats = BackwardStats(int(inside.sum()), int(gap.sum()), int(ext.sum()), int(thin.sum()))
        if ext.any():
            e = np.flatnonzero(ext)
            re, se = self._closest(x[e])
            r[e] = re
            out_xi[e, 0] = se
            out_xi[e, 1] = 0.0
        self.stats.add(stats)
        return r, out_xi

    def _closest(self, x):
        pm = self.pm
        ptr, cand = _candidates(pm.edge_ptr, pm.edge_idx, pm.grid, x)
        best, s, _ = closest_on_edges(pm.Gcoef, ptr, cand, x, pm.k, MAXIT)
        miss = np.flatnonzero(best < 0)
        if miss.size:
            allc = np.flatnonzero(pm.curved).astype(np.int64)
            if allc.size == 0:
                raise NoRegionFound("no curved image edge to extend from", n_points=int(miss.size))
            counts = np.full(miss.size, allc.size)
            ptr2 = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            cand2 = np.tile(allc, miss.size)
            b2, s2, _ = closest_on_edges(pm.Gcoef, ptr2, cand2, x[miss], pm.k, MAXIT)
            best[miss] = b2
            s[miss] = s2
        return best, s

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(x) == 0:
            return np.zeros((0, 2))
        r, xi = self.locate(x)
        return eval_poly(self.pm.Fcoef, r, xi, self.pm.k)

    def pull(self, w, x):
        """``w(X(x))`` for a field ``w`` of the previous level, evaluated on the source piece's parent cell."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(x) == 0:
            return np.zeros((0, 2))
        r, xi = self.locate(x)
        y = eval_poly(self.pm.Fcoef, r, xi, self.pm.k)
        parent = self.pm.parent[r]
        grid = w.dofmap.grid
        return w.eval_local(w.dofmap.cell_pos[parent], (y - grid.corner(parent)) / grid.h)

    def forward(self, y):
        """Patch map ``G(F^{-1}(y))`` for points ``y`` of level ``n-1`` (used in round-trip checks)."""
        pm = self.pm
        y = np.ascontiguousarray(np.atleast_2d(y), dtype=float)
        ptr, cand = _bbox_candidates_F(pm, y)
        best, xi, v = invert_maps(
            pm.Fcoef, pm.kind, ptr, cand, y, pm.k, 1e-13 * pm.grid.h, TOL_INSIDE, MAXIT
        )
        if np.any(best < 0):
            raise NoRegionFound("point outside the source pieces", n_points=int((best < 0).sum()))
        return eval_poly(pm.Gcoef, best, xi, pm.k)


def _bbox_candidates_F(pm: PatchMap, y):
    """Candidates for source points: pieces whose parent cell contains the point."""
    grid = pm.grid
    ij, _ = grid.locate(y)
    cell = grid.cell_id(np.clip(ij[:, 0], 0, grid.nx - 1), np.clip(ij[:, 1], 0, grid.ny - 1))
    order = np.argsort(pm.parent, kind="stable")
    sp = pm.parent[order]
    lo = np.searchsorted(sp, cell, side="left")
    hi = np.searchsorted(sp, cell, side="right")
    count = hi - lo
    ptr = np.concatenate([[0], np.cumsum(count)]).astype(np.int64)
    offs = np.arange(ptr[-1]) - np.repeat(ptr[:-1], count)
    cand = order[np.repeat(lo, count) + offs].astype(np.int64)
    return ptr, cand


class ForwardMap:
    """Discrete forward map ``X^{n-1,n}`` of the SBDF-k scheme.

    ``history[i-1]`` is the record of level ``n-i`` (``i = 1..k``); each record
    provides ``solution`` (callable field) and ``backward`` (its one-step
    backward map, needed for ``i < k``).
    """

    def __init__(self, history, a, b, tau):
        self.k = len(b)
        if len(history) < self.k:
            raise HistoryMissing(
                "not enough history levels for the forward map",
                needed=self.k,
                available=len(history),
            )
        self.history = history
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.tau = float(tau)

    def compose(self, x, i):
        """``X^{n-1,n-i}(x)``: apply the stored one-step backward maps ``i - 1`` times."""
        y = np.asarray(x, dtype=float)
        for m in range(i - 1):
            back = self.history[m].backward
            if back is None:
                raise HistoryMissing("record has no backward map", level_offset=m + 1)
            y = back(y)
        return y

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = x
        acc = np.zeros_like(x)
        for i in range(1, self.k + 1):
            if i > 1:
                back = self.history[i - 2].backward
                if back is None:
                    raise HistoryMissing("record has no backward map", level_offset=i - 1)
                y = back(y)
            u = self.history[i - 1].solution(y)
            acc += self.tau * self.b[i - 1] * u - self.a[i] * (y - x)
        # displacement form of (1/a0) sum_i [tau b_i u_i - a_i X_i], using sum_i a_i = 0
        return x + acc / self.a[0]
