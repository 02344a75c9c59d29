"""Vector Q_k finite elements on the active cover: DOF numbering, evaluation, assembly, solves."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NotSPD, PointOutsideHistoryDomain, SolverFailure
from .geometry import StepGeometry, region_quadrature
from .grid import EXTERIOR, MeshClassification
from .kernels import eval_poly, eval_poly_jac
from .polybasis import (
    QUAD,
    element_rule,
    gauss_1d,
    gauss_square,
    monomial_derivs,
    monomials,
    quad_coeffs,
)


# --------------------------------------------------------------------------
# reference element data


def basis(xi, k):
    """Q_k nodal basis values ``(P, (k+1)^2)`` at local coordinates ``xi``."""
    return monomials(xi, k) @ quad_coeffs(k)


def basis_grad(xi, k):
    """Reference gradients ``(P, (k+1)^2, 2)``."""
    C = quad_coeffs(k)
    return np.stack(
        [monomial_derivs(xi, k, 1, 0) @ C, monomial_derivs(xi, k, 0, 1) @ C], axis=-1
    )


@lru_cache(maxsize=None)
def reference_matrices(k):
    """Mass and stiffness on the unit square (stiffness is scale-free in 2D)."""
    xi, w = gauss_square(k + 1)
    B = basis(xi, k)
    G = basis_grad(xi, k)
    M = np.einsum("q,qa,qb->ab", w, B, B)
    K = np.einsum("q,qad,qbd->ab", w, G, G)
    return M, K


@lru_cache(maxsize=None)
def ghost_edge_matrices(k):
    """Unit-scaled jump matrices on a shared edge for the two penalty forms.

    Returns ``{axis: (JA, JM)}``, each ``(2n, 2n)`` acting on the stacked local
    DOFs of the (left|bottom, right|top) cell pair:

    * ``JA = sum_l 1/((l-1)!)^2 int_0^1 [d^l]^2`` (stiffness form, times ``gamma nu``),
    * ``JM = sum_l 1/(l!)^2 int_0^1 [d^l]^2`` (mass form, times ``gamma h^2``),

    with ``d^l`` the ``l``-th reference derivative normal to the edge.
    """
    n = (k + 1) ** 2
    x, w = gauss_1d(k + 1)
    C = quad_coeffs(k)
    out = {}
    for axis in (0, 1):
        JA = np.zeros((2 * n, 2 * n))
        JM = np.zeros((2 * n, 2 * n))
        if axis == 0:
            left = np.stack([np.ones_like(x), x], axis=1)
            right = np.stack([np.zeros_like(x), x], axis=1)
        else:
            left = np.stack([x, np.ones_like(x)], axis=1)
            right = np.stack([x, np.zeros_like(x)], axis=1)
        for l in range(1, k + 1):
            d = (l, 0) if axis == 0 else (0, l)
            DL = monomial_derivs(left, k, *d) @ C
            DR = monomial_derivs(right, k, *d) @ C
            D = np.concatenate([DL, -DR], axis=1)
            G = np.einsum("q,qa,qb->ab", w, D, D)
            JA += G / factorial(l - 1) ** 2
            JM += G / factorial(l) ** 2
        out[axis] = (JA, JM)
    return out


# --------------------------------------------------------------------------
# DOFs and functions


class DofMap:
    """Continuous Q_k numbering of the lattice nodes touched by cover cells."""

    def __init__(self, cls: MeshClassification, k: int):
        grid = cls.grid
        self.grid = grid
        self.k = k
        self.cells = cls.cover.astype(np.int64)
        self.cell_pos = np.full(grid.n_cells, -1, dtype=np.int64)
        self.cell_pos[self.cells] = np.arange(len(self.cells))
        i, j = grid.cell_ij(self.cells)
        a, b = np.divmod(np.arange((k + 1) ** 2), k + 1)
        gx = k * i[:, None] + a[None, :]
        gy = k * j[:, None] + b[None, :]
        self.stride = k * grid.nx + 1
        lat = gy * self.stride + gx
        self.lattice_ids, inv = np.unique(lat, return_inverse=True)
        self.cell_dofs = inv.reshape(lat.shape).astype(np.int64)
        self.n_dofs = len(self.lattice_ids)
        gy_, gx_ = np.divmod(self.lattice_ids, self.stride)
        self.node_coords = np.stack(
            [grid.origin[0] + gx_ * grid.h / k, grid.origin[1] + gy_ * grid.h / k], axis=1
        )

    def dofs_of(self, cells):
        pos = self.cell_pos[np.asarray(cells)]
        if np.any(pos < 0):
            raise ValueError("cell not in the cover")
        return self.cell_dofs[pos]

    def locate(self, x, extrapolate=True, reach=2):
        """Cover cell and local coordinates for points.

        Points outside the cover are attributed to the nearest cover cell within
        ``reach`` cells (the polynomial is extrapolated); farther points raise.
        """
        grid = self.grid
        ij, xi = grid.locate(x)
        i = np.clip(ij[:, 0], 0, grid.nx - 1)
        j = np.clip(ij[:, 1], 0, grid.ny - 1)
        inside = (ij[:, 0] == i) & (ij[:, 1] == j)
        cell = grid.cell_id(i, j)
        pos = np.where(inside, self.cell_pos[cell], -1)
        miss = np.flatnonzero(pos < 0)
        if miss.size:
            if not extrapolate:
                raise PointOutsideHistoryDomain(
                    "points outside the cover", n_points=int(miss.size)
                )
            for m in miss:
                best, bd = -1, np.inf
                for di in range(-reach, reach + 1):
                    for dj in range(-reach, reach + 1):
                        ci, cj = ij[m, 0] + di, ij[m, 1] + dj
                        if not (0 <= ci < grid.nx and 0 <= cj < grid.ny):
                            continue
                        c = grid.cell_id(ci, cj)
                        if self.cell_pos[c] < 0:
                            continue
                        lo = grid.corner(c)
                        d = np.linalg.norm(np.maximum(np.maximum(lo - x[m], 0), x[m] - lo - grid.h))
                        if d < bd:
                            best, bd = c, d
                if best < 0:
                    raise PointOutsideHistoryDomain(
                        "point too far from the cover", point=np.asarray(x[m]).tolist()
                    )
                cell[m] = best
                pos[m] = self.cell_pos[best]
            xi = (x - grid.corner(cell)) / grid.h
        return pos, xi


@dataclass
class FEFunction:
    """Two-component Q_k field; ``coef[c]`` holds nodal values of component ``c``."""

    dofmap: DofMap
    coef: np.ndarray

    @classmethod
    def zeros(cls, dofmap):
        return cls(dofmap, np.zeros((2, dofmap.n_dofs)))

    @classmethod
    def interpolate(cls, dofmap, fn):
        return cls(dofmap, np.asarray(fn(dofmap.node_coords), dtype=float).T.copy())

    def local_coef(self, pos):
        """``(P, (k+1)^2, 2)`` monomial coefficients of the field on the given cover cells."""
        vals = self.coef[:, self.dofmap.cell_dofs[pos]]  # (2, P, n)
        return np.einsum("mn,pnc->pmc", quad_coeffs(self.dofmap.k), vals.transpose(1, 2, 0))

    def eval_local(self, pos, xi):
        vals = self.coef[:, self.dofmap.cell_dofs[pos]]
        B = basis(xi, self.dofmap.k)
        return np.einsum("pa,cpa->pc", B, vals)

    def grad_local(self, pos, xi):
        vals = self.coef[:, self.dofmap.cell_dofs[pos]]
        G = basis_grad(xi, self.dofmap.k) / self.dofmap.grid.h
        return np.einsum("pad,cpa->pcd", G, vals)

    def __call__(self, x, extrapolate=True):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if len(x) == 0:
            return np.zeros((0, 2))
        pos, xi = self.dofmap.locate(x, extrapolate=extrapolate)
        return self.eval_local(pos, xi)

    def grad(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        pos, xi = self.dofmap.locate(x)
        return self.grad_local(pos, xi)


# --------------------------------------------------------------------------
# assembly


@dataclass
class Operators:
    """Scalar operators shared by both velocity components."""

    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    ghost_a: sp.csr_matrix  # unit-coefficient stiffness-form jumps
    ghost_m: sp.csr_matrix  # unit-coefficient mass-form jumps (already scaled by h^2)

    def penalized_mass(self, gamma):
        return (self.mass + gamma * self.ghost_m).tocsr()

    def step_matrix(self, a0, tau, nu, gamma):
        return (a0 * self.mass + tau * (nu * self.stiffness + gamma * nu * self.ghost_a)).tocsr()

    def stiffness_penalty(self, nu, gamma):
        return (nu * self.stiffness + gamma * nu * self.ghost_a).tocsr()


def _coo(rows, cols, vals, n):
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, np.int64)
        v = np.zeros(0)
    return sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()


def _block(dofs, mats):
    """COO triplets for per-element dense blocks ``mats[e]`` on ``dofs[e]``."""
    n = dofs.shape[1]
    r = np.repeat(dofs, n, axis=1).ravel()
    c = np.tile(dofs, (1, n)).ravel()
    return r, c, mats.reshape(-1)


def region_basis(geo: StepGeometry, dofmap: DofMap, n=None):
    """Quadrature data on cut regions: cover position, weights, basis values and gradients."""
    regs = geo.regions
    k = dofmap.k
    grid = dofmap.grid
    X, W, _ = region_quadrature(regs, n=n)
    R, Q = W.shape
    corner = grid.corner(regs.parent)
    xi = (X - corner[:, None, :]) / grid.h
    flat = xi.reshape(-1, 2)
    B = basis(flat, k).reshape(R, Q, -1)
    G = (basis_grad(flat, k) / grid.h).reshape(R, Q, -1, 2)
    pos = dofmap.cell_pos[regs.parent]
    return X, W, B, G, pos


def assemble(geo: StepGeometry, dofmap: DofMap) -> Operators:
    """Mass, stiffness (on the tracked domain) and unit ghost-penalty operators."""
    k = dofmap.k
    h = dofmap.grid.h
    N = dofmap.n_dofs
    Mref, Kref = reference_matrices(k)
    rows, cols, mv, kv = [], [], [], []

    inner = dofmap.dofs_of(geo.interior)
    if len(inner):
        ne = len(inner)
        r, c, v = _block(inner, np.broadcast_to(h * h * Mref, (ne,) + Mref.shape).copy())
        rows.append(r)
        cols.append(c)
        mv.append(v)
        kv.append(np.broadcast_to(Kref, (ne,) + Kref.shape).reshape(-1).copy())

    if len(geo.regions):
        _, W, B, G, pos = region_basis(geo, dofmap)
        Me = np.einsum("rq,rqa,rqb->rab", W, B, B)
        Ke = np.einsum("rq,rqad,rqbd->rab", W, G, G)
        dofs = dofmap.cell_dofs[pos]
        r, c, v = _block(dofs, Me)
        rows.append(r)
        cols.append(c)
        mv.append(v)
        kv.append(Ke.reshape(-1))

    mass = _coo(rows, cols, mv, N)
    stiff = _coo(rows, cols, kv, N)

    E = geo.cls.ghost_edges
    grows, gcols, ga, gm = [], [], [], []
    mats = ghost_edge_matrices(k)
    for axis in (0, 1):
        sel = E[E[:, 2] == axis]
        if len(sel) == 0:
            continue
        dofs = np.concatenate([dofmap.dofs_of(sel[:, 0]), dofmap.dofs_of(sel[:, 1])], axis=1)
        JA, JM = mats[axis]
        ne = len(sel)
        r, c, v = _block(dofs, np.broadcast_to(JA, (ne,) + JA.shape).copy())
        grows.append(r)
        gcols.append(c)
        ga.append(v)
        gm.append(np.broadcast_to(h * h * JM, (ne,) + JM.shape).reshape(-1).copy())
    ghost_a = _coo(grows, gcols, ga, N)
    ghost_m = _coo(grows, gcols, gm, N)
    return Operators(mass, stiff, ghost_a, ghost_m)


def assemble_load(geo: StepGeometry, dofmap: DofMap, f, gN=None, nu=1.0):
    """``(f, v)`` over the tracked domain plus ``nu * int_Gamma gN . v``; shape ``(2, N)``.

    ``f(x)`` returns ``(P, 2)``; ``gN(x, n)`` returns ``(P, 2)`` given outward normals.
    """
    k = dofmap.k
    grid = dofmap.grid
    h = grid.h
    out = np.zeros((2, dofmap.n_dofs))
    xi, w = element_rule(QUAD, k)
    B = basis(xi, k)
    cells = geo.interior
    if len(cells):
        X = grid.corner(cells)[:, None, :] + h * xi[None, :, :]
        F = np.asarray(f(X.reshape(-1, 2))).reshape(len(cells), len(w), 2)
        loc = np.einsum("q,eqc,qa->cea", h * h * w, F, B)
        dofs = dofmap.dofs_of(cells)
        for c in range(2):
            np.add.at(out[c], dofs.ravel(), loc[c].ravel())
    if len(geo.regions):
        X, W, Br, _, pos = region_basis(geo, dofmap)
        F = np.asarray(f(X.reshape(-1, 2))).reshape(X.shape[0], X.shape[1], 2)
        loc = np.einsum("rq,rqc,rqa->cra", W, F, Br)
        dofs = dofmap.cell_dofs[pos]
        for c in range(2):
            np.add.at(out[c], dofs.ravel(), loc[c].ravel())
    if gN is not None and len(geo.bnd_weights):
        pos = dofmap.cell_pos[geo.bnd_cells]
        xi_b = (geo.bnd_points - grid.corner(geo.bnd_cells)) / h
        Bb = basis(xi_b, k)
        g = np.asarray(gN(geo.bnd_points, geo.bnd_normals))
        loc = nu * np.einsum("p,pc,pa->cpa", geo.bnd_weights, g, Bb)
        dofs = dofmap.cell_dofs[pos]
        for c in range(2):
            np.add.at(out[c], dofs.ravel(), loc[c].ravel())
    return out


def pullback_rhs(w: FEFunction, back, geo: StepGeometry, dofmap: DofMap):
    """``(w o X, v)`` over the tracked domain, with ``X`` the backward map ``back``.

    Quadrature runs on the new level's interior cells and cut regions, so the
    test functions are integrated piecewise polynomially; ``w o X`` is only
    evaluated at the quadrature points.
    """
    return assemble_load(geo, dofmap, lambda x: back.pull(w, x))


def pushforward_rhs(w: FEFunction, pmap, dofmap: DofMap):
    """``(w o X^{-1}, v)`` over the image domain in pushforward form.

    Per map piece and quadrature point ``xi_q`` the contribution is
    ``w(F(xi_q)) v(G(xi_q)) |det dG(xi_q)| w_q``.  Image points that land outside
    the target cover are dropped; the count is returned.
    """
    k = dofmap.k
    grid = dofmap.grid
    out = np.zeros((2, dofmap.n_dofs))
    dropped = 0
    for kd in np.unique(pmap.kind):
        sel = np.flatnonzero(pmap.kind == kd)
        xi, wq = element_rule(int(kd), k)
        nq = len(wq)
        ids = np.repeat(sel, nq)
        pts = np.tile(xi, (len(sel), 1))
        Fx = eval_poly(pmap.Fcoef, ids, pts, k)
        Gx, J = eval_poly_jac(pmap.Gcoef, ids, pts, k)
        det = np.abs(J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0])
        # source field on the parent cell of the previous level (no point location)
        src_pos = w.dofmap.cell_pos[pmap.parent[ids]]
        xs = (Fx - w.dofmap.grid.corner(pmap.parent[ids])) / w.dofmap.grid.h
        wv = w.eval_local(src_pos, xs)
        ij, xt = grid.locate(Gx)
        ok = (ij[:, 0] >= 0) & (ij[:, 0] < grid.nx) & (ij[:, 1] >= 0) & (ij[:, 1] < grid.ny)
        cell = np.where(ok, grid.cell_id(ij[:, 0], ij[:, 1]), 0)
        pos = np.where(ok, dofmap.cell_pos[cell], -1)
        keep = pos >= 0
        dropped += int(np.sum(~keep))
        Bt = basis(xt[keep], k)
        wt = (det * np.tile(wq, len(sel)))[keep]
        loc = np.einsum("p,pc,pa->cpa", wt, wv[keep], Bt)
        dofs = dofmap.cell_dofs[pos[keep]]
        for c in range(2):
            np.add.at(out[c], dofs.ravel(), loc[c].ravel())
    return out, dropped


# --------------------------------------------------------------------------
# solvers


class SPDSolver:
    """Factorization of a symmetric positive definite matrix reused for both components.

    ``method="direct"`` uses a sparse LU with diagonal pivoting in symmetric mode;
    a nonpositive pivot means the matrix is not SPD.  ``method="cg"`` runs
    Jacobi-preconditioned conjugate gradients to ``rtol``.
    """

    def __init__(self, A, method="direct", rtol=1e-12, check_spd=True):
        self.A = sp.csc_matrix(A)
        self.method = method
        self.rtol = rtol
        if method == "direct":
            try:
                self.lu = spla.splu(
                    self.A,
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            except RuntimeError as exc:
                raise NotSPD(f"factorization failed: {exc}", n=self.A.shape[0]) from exc
            if check_spd:
                piv = self.lu.U.diagonal()
                if not np.all(piv > 0) or not np.array_equal(self.lu.perm_r, self.lu.perm_c):
                    raise NotSPD(
                        "nonpositive pivot in symmetric factorization",
                        min_pivot=float(piv.min()),
                    )
        elif method == "cg":
            d = self.A.diagonal()
            if np.any(d <= 0):
                raise NotSPD("nonpositive diagonal entry", min_diag=float(d.min()))
            self.Minv = sp.diags(1.0 / d)
        else:
            raise ValueError(f"unknown solver {method!r}")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.method == "direct":
            return self.lu.solve(b)
        n = self.A.shape[0]
        x, info = spla.cg(self.A, b, rtol=self.rtol, atol=0.0, maxiter=10 * n, M=self.Minv)
        if info != 0:
            raise SolverFailure("conjugate gradients did not converge", info=int(info))
        return x

    def solve2(self, B):
        """Solve for a ``(2, N)`` right-hand side (one column per component)."""
        return np.stack([self.solve(B[0]), self.solve(B[1])])


def is_spd(A) -> bool:
    try:
        SPDSolver(A, method="direct")
    except NotSPD:
        return False
    return True


def cover_mask(cls: MeshClassification):
    return cls.status != EXTERIOR
