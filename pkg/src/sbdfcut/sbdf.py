"""SBDF-k time stepping on the tracked moving domain."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NumericalFailure, StepFailure
from .fem import (
    DofMap,
    FEFunction,
    SPDSolver,
    assemble,
    assemble_load,
    basis_grad,
    pullback_rhs,
    pushforward_rhs,
    region_basis,
)
from .flowmaps import BackwardMap, ForwardMap, build_patch_map
from .geometry import StepGeometry, build_geometry, cellwise_areas, region_quadrature
from .grid import GridSpec, classify
from .polybasis import gauss_square
from .problems import ManufacturedProblem
from .tracking import initial_curve, track_surface

F = Fraction
SBDF_A = {
    1: (F(1), F(-1)),
    2: (F(3, 2), F(-2), F(1, 2)),
    3: (F(11, 6), F(-3), F(3, 2), F(-1, 3)),
    4: (F(25, 12), F(-4), F(3), F(-4, 3), F(1, 4)),
}
SBDF_B = {
    1: (F(1),),
    2: (F(2), F(-1)),
    3: (F(3), F(-3), F(1)),
    4: (F(4), F(-6), F(4), F(-1)),
}


@dataclass(frozen=True)
class SBDFTable:
    """Coefficients ``a_0..a_k`` (time difference) and ``b_1..b_k`` (extrapolation)."""

    k: int
    a: tuple
    b: tuple

    @property
    def af(self) -> np.ndarray:
        return np.array([float(x) for x in self.a])

    @property
    def bf(self) -> np.ndarray:
        return np.array([float(x) for x in self.b])


def sbdf_table(k: int) -> SBDFTable:
    if k not in SBDF_A:
        raise ValueError(f"SBDF order must be 1..4, got {k}")
    return SBDFTable(k, SBDF_A[k], SBDF_B[k])


@dataclass
class Params:
    k: int
    h: float
    tau: float
    gamma: float = 1e-3
    eta_factor: float = 0.5
    delta: float = 0.01
    nu: float | None = None
    solver: str = "direct"
    transport: str = "pullback"

    @property
    def eta(self) -> float:
        return self.eta_factor * self.h


@dataclass
class StepRecord:
    """Everything a later step needs from time level ``n``."""

    n: int
    t: float
    curve: object
    geo: StepGeometry
    dofmap: DofMap
    solution: FEFunction
    backward: BackwardMap | None = None
    hats: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


def _wrap(n, phase, exc):
    if isinstance(exc, StepFailure):
        return exc
    ctx = exc.diagnostic() if isinstance(exc, NumericalFailure) else {"message": str(exc)}
    ctx.pop("message", None)
    ctx["cause"] = ctx.pop("error", type(exc).__name__)
    err = StepFailure(f"step {n} failed during {phase}: {exc}", step=n, phase=phase, **ctx)
    err.__cause__ = exc
    return err


class Simulation:
    """Drives startup, stepping and error evaluation for a manufactured problem."""

    def __init__(self, problem: ManufacturedProblem, params: Params, grid: GridSpec | None = None):
        self.problem = problem
        self.params = params
        self.table = sbdf_table(params.k)
        self.nu = problem.nu if params.nu is None else params.nu
        lo, hi = problem.box
        self.grid = grid or GridSpec.box(lo, hi, params.h)
        self.records: list[StepRecord] = []
        self.e1_sq = 0.0
        self.steps: list[dict] = []
        self.failed_curve = None

    # ------------------------------------------------------------------
    def _level(self, n, t, curve):
        p = self.params
        cls = classify(self.grid, curve, step=n)
        geo = build_geometry(curve, cls, p.k)
        dofmap = DofMap(cls, p.k)
        return geo, dofmap

    def _transport_chain(self, prev: StepRecord, back, dofmap, geo, count):
        """Penalized L2 projections ``u_hat^{n,n-i}`` of the one-step transported histories."""
        ops = assemble(geo, dofmap)
        Mpen = SPDSolver(ops.penalized_mass(self.params.gamma), method=self.params.solver)
        hats, dropped = [], 0
        for i in range(1, count + 1):
            src = prev.solution if i == 1 else prev.hats[i - 2]
            if self.params.transport == "pushforward":
                rhs, d = pushforward_rhs(src, back.pm, dofmap)
            else:
                rhs, d = pullback_rhs(src, back, geo, dofmap), 0
            dropped += d
            hats.append(FEFunction(dofmap, Mpen.solve2(rhs)))
        return ops, hats, dropped

    def startup(self):
        """Levels ``0..k-1`` from exact data (exact flow, interpolated velocity)."""
        p = self.params
        prob = self.problem
        curve = initial_curve(prob.shape, p.eta, p.delta)
        geo, dofmap = self._level(0, 0.0, curve)
        u0 = FEFunction.interpolate(dofmap, lambda x: prob.velocity(x, 0.0))
        self.records = [StepRecord(0, 0.0, curve, geo, dofmap, u0)]
        for m in range(1, p.k):
            prev = self.records[-1]
            t0, t1 = prev.t, m * p.tau

            def flow(x, t0=t0, t1=t1):
                return prob.flow(x, t0, t1)

            curve = track_surface(prev.curve, flow, p.eta, p.delta)
            geo, dofmap = self._level(m, t1, curve)
            pm = build_patch_map(prev.geo, flow)
            back = BackwardMap(pm)
            um = FEFunction.interpolate(dofmap, lambda x, t=t1: prob.velocity(x, t))
            _, hats, _ = self._transport_chain(prev, back, dofmap, geo, min(m, p.k - 1))
            self.records.append(StepRecord(m, t1, curve, geo, dofmap, um, back, hats))
        return self.records

    def advance(self) -> StepRecord:
        p = self.params
        prob = self.problem
        k = p.k
        a, b = self.table.af, self.table.bf
        prev = self.records[-1]
        n = prev.n + 1
        t = n * p.tau
        info = {"n": n, "t": t}
        clock = time.perf_counter()
        phase = "forward map"
        try:
            hist = self.records[::-1][:k]
            fwd = ForwardMap(hist, a, b, p.tau)
            phase = "surface tracking"
            curve = track_surface(prev.curve, fwd, p.eta, p.delta)
            phase = "classification"
            geo, dofmap = self._level(n, t, curve)
            phase = "patch map"
            pm = build_patch_map(prev.geo, fwd)
            back = BackwardMap(pm)
            phase = "transport"
            ops, hats, dropped = self._transport_chain(prev, back, dofmap, geo, k)
            phase = "solve"
            A = ops.step_matrix(a[0], p.tau, self.nu, p.gamma)
            solver = SPDSolver(A, method=p.solver)
            load = assemble_load(
                geo,
                dofmap,
                lambda x: prob.forcing(x, t, self.nu),
                lambda x, nn: prob.neumann(x, nn, t),
                self.nu,
            )
            rhs = p.tau * load
            for i in range(1, k + 1):
                rhs -= a[i] * np.stack([ops.mass @ hats[i - 1].coef[c] for c in range(2)])
            u = FEFunction(dofmap, solver.solve2(rhs))
        except NumericalFailure as exc:
            # keep the offending curve for post-mortem inspection
            self.failed_curve = locals().get("curve")
            raise _wrap(n, phase, exc) from exc
        info.update(
            n_points=len(curve.control_points),
            n_dofs=dofmap.n_dofs,
            n_cover=len(geo.cls.cover),
            n_regions=len(geo.regions),
            dropped=dropped,
            clamped=back.stats.clamped,
            extended=back.stats.extended,
            extrapolated=back.stats.extrapolated,
            seconds=time.perf_counter() - clock,
        )
        rec = StepRecord(n, t, curve, geo, dofmap, u, back, hats[: k - 1], info)
        self.records.append(rec)
        if len(self.records) > k:
            self.records = self.records[-k:]
        self.steps.append(info)
        return rec

    def n_steps(self) -> int:
        N = self.problem.T / self.params.tau
        Nr = int(round(N))
        if abs(N - Nr) > 1e-9 * max(1.0, N):
            raise ValueError("T / tau must be an integer")
        return Nr

    def run(self, callback=None):
        self.startup()
        N = self.n_steps()
        if callback:
            for rec in self.records:
                callback(rec)
        while self.records[-1].n < N:
            rec = self.advance()
            self.e1_sq += self.params.tau * h1_error(rec, self.problem) ** 2
            if callback:
                callback(rec)
        return self.records[-1]


# --------------------------------------------------------------------------
# error measures


def _interior_quadrature(grid, cells, n):
    xi, w = gauss_square(n)
    X = grid.corner(cells)[:, None, :] + grid.h * xi[None, :, :]
    W = np.broadcast_to(grid.h**2 * w, (len(cells), len(w)))
    return X, W, xi


def h1_error(rec: StepRecord, problem: ManufacturedProblem, extra: int = 2) -> float:
    """``|u(t_n) - u_h^n|_{H^1}`` over the tracked domain."""
    geo, dm, uh = rec.geo, rec.dofmap, rec.solution
    k = dm.k
    n = k + 1 + extra
    total = 0.0
    cells = geo.interior
    if len(cells):
        X, W, xi = _interior_quadrature(dm.grid, cells, n)
        G = basis_grad(xi, k) / dm.grid.h  # (Q, a, d)
        vals = uh.coef[:, dm.dofs_of(cells)]  # (c, e, a)
        gh = np.einsum("qad,cea->eqcd", G, vals)
        ge = problem.grad(X.reshape(-1, 2), rec.t).reshape(gh.shape)
        total += float(np.sum(W[:, :, None, None] * (ge - gh) ** 2))
    if len(geo.regions):
        X, W, _, Gr, pos = region_basis(geo, dm, n=n)
        vals = uh.coef[:, dm.cell_dofs[pos]]  # (c, r, a)
        gh = np.einsum("rqad,cra->rqcd", Gr, vals)
        ge = problem.grad(X.reshape(-1, 2), rec.t).reshape(gh.shape)
        total += float(np.sum(W[:, :, None, None] * (ge - gh) ** 2))
    return float(np.sqrt(total))


def l2_error_exact_domain(rec: StepRecord, problem: ManufacturedProblem, extra: int = 2) -> float:
    """``||u(t_n) - u_h^n||_{L^2}`` over the analytic initial shape (the exact final domain)."""
    grid = rec.dofmap.grid
    k = rec.dofmap.k
    shape = problem.shape
    cls = classify(grid, shape, check=False)
    geo = build_geometry(shape, cls, k)
    n = k + 1 + extra
    total = 0.0
    cells = geo.interior
    if len(cells):
        X, W, _ = _interior_quadrature(grid, cells, n)
        d = problem.velocity(X.reshape(-1, 2), rec.t) - rec.solution(X.reshape(-1, 2))
        total += float(np.sum(W.ravel() * np.sum(d**2, axis=1)))
    if len(geo.regions):
        X, W, _ = region_quadrature(geo.regions, n=n)
        d = problem.velocity(X.reshape(-1, 2), rec.t) - rec.solution(X.reshape(-1, 2))
        total += float(np.sum(W.ravel() * np.sum(d**2, axis=1)))
    return float(np.sqrt(total))


def area_error(rec: StepRecord, problem: ManufacturedProblem) -> float:
    """Cellwise ``sum |area(Omega_T ∩ K) - area(Omega_h ∩ K)|``."""
    grid = rec.dofmap.grid
    exact = cellwise_areas(problem.shape, grid)
    tracked = cellwise_areas(rec.curve, grid)
    return float(np.sum(np.abs(exact - tracked)))
