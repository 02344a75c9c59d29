"""Manufactured test problems with analytic velocity, forcing and Neumann data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .curves import EllipseCurve
from .errors import UnknownExample

PI = np.pi


@dataclass(frozen=True)
class ManufacturedProblem:
    """Exact velocity ``u(x, t)`` with analytic derivatives.

    ``velocity(x, t) -> (P, 2)``, ``grad(x, t) -> (P, 2, 2)`` with
    ``grad[:, i, j] = d u_i / d x_j``, ``dt(x, t)`` and ``laplacian(x, t)``
    likewise.  ``tau_factor`` gives the time step ``tau = tau_factor * h``.
    """

    name: str
    velocity: Callable
    grad: Callable
    dt: Callable
    laplacian: Callable
    shape: EllipseCurve
    T: float
    tau_factor: float
    box: tuple
    nu: float = 1.0
    exact_flow: Callable | None = None

    def forcing(self, x, t, nu=None):
        """``f = du/dt + (u . grad) u - nu lap u``."""
        nu = self.nu if nu is None else nu
        u = self.velocity(x, t)
        G = self.grad(x, t)
        return self.dt(x, t) + np.einsum("pij,pj->pi", G, u) - nu * self.laplacian(x, t)

    def neumann(self, x, n, t):
        """``g_N = grad u . n``."""
        return np.einsum("pij,pj->pi", self.grad(x, t), n)

    def flow(self, x, t0, t1):
        """Exact characteristics: positions at ``t1`` of points at ``x`` at time ``t0``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if t1 == t0 or len(x) == 0:
            return x.copy()
        if self.exact_flow is not None:
            return self.exact_flow(x, t0, t1)
        n = len(x)

        def rhs(t, y):
            return self.velocity(y.reshape(n, 2), t).ravel()

        sol = solve_ivp(rhs, (t0, t1), x.ravel(), method="DOP853", rtol=1e-13, atol=1e-14)
        if not sol.success:  # pragma: no cover - smooth fields
            raise RuntimeError(sol.message)
        return sol.y[:, -1].reshape(n, 2)


def rotation_flow(x, t0, t1, center=(0.5, 0.5)):
    """Closed-form characteristics of the unit-speed rotation about ``center``."""
    c = np.asarray(center)
    th = t1 - t0
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return c + (np.asarray(x) - c) @ R.T


def _ex1():
    def vel(x, t):
        return np.stack([0.5 - x[:, 1], x[:, 0] - 0.5], axis=1)

    def grad(x, t):
        G = np.zeros((len(x), 2, 2))
        G[:, 0, 1] = -1.0
        G[:, 1, 0] = 1.0
        return G

    def zero(x, t):
        return np.zeros((len(x), 2))

    return ManufacturedProblem(
        "example1",
        vel,
        grad,
        zero,
        zero,
        # axis lengths 0.6 and 0.3, i.e. semi-axes 0.3 and 0.15
        EllipseCurve((0.5, 0.5), 0.3, 0.15),
        T=PI,
        tau_factor=PI,
        box=(0.0, 1.0),
        exact_flow=rotation_flow,
    )


def _ex2():
    def c(t):
        return np.cos(PI * t / 3.0)

    def dc(t):
        return -PI / 3.0 * np.sin(PI * t / 3.0)

    def shape(x):
        X, Y = x[:, 0], x[:, 1]
        return np.stack(
            [np.sin(PI * X) ** 2 * np.sin(2 * PI * Y), -np.sin(PI * Y) ** 2 * np.sin(2 * PI * X)],
            axis=1,
        )

    def vel(x, t):
        return c(t) * shape(x)

    def grad(x, t):
        X, Y = x[:, 0], x[:, 1]
        G = np.empty((len(x), 2, 2))
        # d/dx sin^2(pi x) = pi sin(2 pi x)
        G[:, 0, 0] = PI * np.sin(2 * PI * X) * np.sin(2 * PI * Y)
        G[:, 0, 1] = 2 * PI * np.sin(PI * X) ** 2 * np.cos(2 * PI * Y)
        G[:, 1, 0] = -2 * PI * np.sin(PI * Y) ** 2 * np.cos(2 * PI * X)
        G[:, 1, 1] = -PI * np.sin(2 * PI * Y) * np.sin(2 * PI * X)
        return c(t) * G

    def dt(x, t):
        return dc(t) * shape(x)

    def lap(x, t):
        X, Y = x[:, 0], x[:, 1]
        # d2/dx2 sin^2(pi x) = 2 pi^2 cos(2 pi x); d2/dy2 sin(2 pi y) = -4 pi^2 sin(2 pi y)
        l0 = 2 * PI**2 * np.cos(2 * PI * X) * np.sin(2 * PI * Y) - 4 * PI**2 * np.sin(
            PI * X
        ) ** 2 * np.sin(2 * PI * Y)
        l1 = -(
            2 * PI**2 * np.cos(2 * PI * Y) * np.sin(2 * PI * X)
            - 4 * PI**2 * np.sin(PI * Y) ** 2 * np.sin(2 * PI * X)
        )
        return c(t) * np.stack([l0, l1], axis=1)

    return ManufacturedProblem(
        "example2",
        vel,
        grad,
        dt,
        lap,
        EllipseCurve((0.5, 0.75), 0.15, 0.15),
        T=3.0,
        tau_factor=1.0,
        box=(0.0, 1.0),
    )


def _ex3():
    def c(t):
        return np.cos(PI * t / 3.0)

    def dc(t):
        return -PI / 3.0 * np.sin(PI * t / 3.0)

    def shape(x):
        X, Y = x[:, 0], x[:, 1]
        return np.stack(
            [np.sin(2 * PI * X) * np.sin(2 * PI * Y), np.cos(2 * PI * X) * np.cos(2 * PI * Y)],
            axis=1,
        )

    def vel(x, t):
        return c(t) * shape(x)

    def grad(x, t):
        X, Y = x[:, 0], x[:, 1]
        s2x, c2x = np.sin(2 * PI * X), np.cos(2 * PI * X)
        s2y, c2y = np.sin(2 * PI * Y), np.cos(2 * PI * Y)
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = 2 * PI * c2x * s2y
        G[:, 0, 1] = 2 * PI * s2x * c2y
        G[:, 1, 0] = -2 * PI * s2x * c2y
        G[:, 1, 1] = -2 * PI * c2x * s2y
        return c(t) * G

    def dt(x, t):
        return dc(t) * shape(x)

    def lap(x, t):
        return -8 * PI**2 * vel(x, t)

    return ManufacturedProblem(
        "example3",
        vel,
        grad,
        dt,
        lap,
        EllipseCurve((0.5, 0.5), 0.15, 0.15),
        T=3.0,
        tau_factor=1.0,
        box=(0.0, 1.0),
    )


_EXAMPLES = {1: _ex1, 2: _ex2, 3: _ex3}


def example(idx: int) -> ManufacturedProblem:
    try:
        return _EXAMPLES[int(idx)]()
    except (KeyError, ValueError):
        raise UnknownExample(f"unknown example {idx!r}; choose 1, 2 or 3") from None


def zero_problem(shape=None, box=(0.0, 1.0), T=1.0) -> ManufacturedProblem:
    """Zero velocity and data; the domain must stay fixed."""

    def zero(x, t):
        return np.zeros((len(np.atleast_2d(x)), 2))

    def zgrad(x, t):
        return np.zeros((len(np.atleast_2d(x)), 2, 2))

    return ManufacturedProblem(
        "zero",
        zero,
        zgrad,
        zero,
        zero,
        shape or EllipseCurve((0.5, 0.5), 0.2, 0.15),
        T=T,
        tau_factor=1.0,
        box=box,
        exact_flow=lambda x, t0, t1: np.array(x, dtype=float),
    )
