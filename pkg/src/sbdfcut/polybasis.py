"""Monomial-coefficient representation of Lagrange bases and quadrature rules.

Every polynomial object in the package (element basis functions, isoparametric
maps, finite element fields restricted to a cell) is stored as coefficients
over the tensor monomials ``xi1**p * xi2**q`` with ``0 <= p, q <= k``.  The
monomial index is ``m = p * (k + 1) + q``.  Triangle (P_k) objects use the same
layout with zero rows for ``p + q > k``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

QUAD = 0
TRIANGLE = 1


@lru_cache(maxsize=None)
def monomial_exponents(k: int) -> tuple[np.ndarray, np.ndarray]:
    p, q = np.divmod(np.arange((k + 1) ** 2), k + 1)
    p.setflags(write=False)
    q.setflags(write=False)
    return p, q


@lru_cache(maxsize=None)
def lagrange_1d(k: int) -> np.ndarray:
    """Coefficients ``C[p, a]`` of the equispaced Lagrange basis on [0, 1].

    ``ell_a(s) = sum_p C[p, a] s**p`` and ``ell_a(b / k) = delta_ab``.
    """
    nodes = np.arange(k + 1) / k
    V = nodes[:, None] ** np.arange(k + 1)[None, :]
    C = np.linalg.inv(V)
    C.setflags(write=False)
    return C


@lru_cache(maxsize=None)
def quad_coeffs(k: int) -> np.ndarray:
    """Q_k nodal basis on the unit square; local node ``a * (k + 1) + b`` sits at (a/k, b/k)."""
    C1 = lagrange_1d(k)
    C = np.kron(C1, C1)
    C.setflags(write=False)
    return C


@lru_cache(maxsize=None)
def triangle_nodes(k: int) -> np.ndarray:
    """Reference lattice ``(i/k, j/k)``, ``i + j <= k``, row-major in ``i``."""
    ij = [(i, j) for i in range(k + 1) for j in range(k + 1 - i)]
    out = np.array(ij, dtype=float) / k
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def triangle_coeffs(k: int) -> np.ndarray:
    """P_k nodal basis on the reference triangle embedded in the Q_k monomial layout."""
    p, q = monomial_exponents(k)
    keep = np.flatnonzero(p + q <= k)
    nodes = triangle_nodes(k)
    V = nodes[:, 0:1] ** p[keep][None, :] * nodes[:, 1:2] ** q[keep][None, :]
    C = np.zeros(((k + 1) ** 2, len(nodes)))
    C[keep] = np.linalg.inv(V)
    C.setflags(write=False)
    return C


@lru_cache(maxsize=None)
def quad_nodes(k: int) -> np.ndarray:
    a, b = np.divmod(np.arange((k + 1) ** 2), k + 1)
    out = np.stack([a / k, b / k], axis=1)
    out.setflags(write=False)
    return out


def reference_nodes(kind: int, k: int) -> np.ndarray:
    return quad_nodes(k) if kind == QUAD else triangle_nodes(k)


def nodal_coeffs(kind: int, k: int) -> np.ndarray:
    return quad_coeffs(k) if kind == QUAD else triangle_coeffs(k)


def monomials(xi: np.ndarray, k: int) -> np.ndarray:
    """Monomial values, shape ``(P, (k+1)**2)``."""
    xi = np.asarray(xi, dtype=float)
    pw1 = xi[:, 0:1] ** np.arange(k + 1)
    pw2 = xi[:, 1:2] ** np.arange(k + 1)
    return (pw1[:, :, None] * pw2[:, None, :]).reshape(len(xi), -1)


def monomial_derivs(xi: np.ndarray, k: int, d1: int, d2: int) -> np.ndarray:
    """Values of ``d^{d1}/dxi1 d^{d2}/dxi2`` of each monomial, shape ``(P, (k+1)**2)``."""
    xi = np.asarray(xi, dtype=float)
    e = np.arange(k + 1)

    def falling(n):
        out = np.ones(k + 1)
        for r in range(n):
            out = out * (e - r)
        return out

    f1, f2 = falling(d1), falling(d2)
    with np.errstate(divide="ignore", invalid="ignore"):
        pw1 = np.where(e >= d1, xi[:, 0:1] ** np.maximum(e - d1, 0), 0.0) * f1
        pw2 = np.where(e >= d2, xi[:, 1:2] ** np.maximum(e - d2, 0), 0.0) * f2
    return (pw1[:, :, None] * pw2[:, None, :]).reshape(len(xi), -1)


def to_monomial(nodes: np.ndarray, kind: int, k: int) -> np.ndarray:
    """Map nodal values ``(..., n_nodes, c)`` to monomial coefficients ``(..., (k+1)**2, c)``."""
    C = nodal_coeffs(kind, k)
    return np.einsum("mn,...nc->...mc", C, nodes)


# --------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=None)
def gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule with ``n`` points on [0, 1]."""
    x, w = roots_legendre(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_square(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_1d(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    wts = np.outer(w, w).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@lru_cache(maxsize=None)
def gauss_triangle(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Duffy) Gauss rule on the reference triangle, exact to degree ``2n - 1``.

    Gauss-Legendre in the radial-free direction and Gauss-Jacobi(1, 0) in the
    collapsed one; all weights positive, sum 1/2.
    """
    u, wu = roots_legendre(n)
    v, wv = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    # Jacobi weight (1 - v) on [-1, 1] -> (1 - s) on [0, 1]
    s = 0.5 * (v + 1.0)
    ws = 0.25 * wv
    U, S = np.meshgrid(u, s, indexing="ij")
    pts = np.stack([(U * (1.0 - S)).ravel(), S.ravel()], axis=1)
    wts = np.outer(wu, ws).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def element_rule(kind: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(k+1)-point tensor Gauss on the square, degree-(2k+1) exact rule on the triangle."""
    return gauss_square(k + 1) if kind == QUAD else gauss_triangle(k + 1)


def sample_points(kind: int, n: int) -> np.ndarray:
    """Uniform ``n x n`` reference samples including the boundary (clipped to the triangle)."""
    s = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(s, s, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    if kind == TRIANGLE:
        pts = pts[pts.sum(axis=1) <= 1.0 + 1e-14]
    return pts
