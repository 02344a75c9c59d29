from fractions import Fraction

import numpy as np
import pytest

from sbdfcut.curves import EllipseCurve
from sbdfcut.errors import NumericalFailure, StepFailure
from sbdfcut.geometry import region_quadrature
from sbdfcut.polybasis import gauss_square
from sbdfcut.problems import ManufacturedProblem, example, rotation_flow, zero_problem
from sbdfcut.sbdf import SBDF_A, SBDF_B, Params, Simulation, sbdf_table


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_coefficients_sum_to_zero_exactly(k):
    t = sbdf_table(k)
    assert all(isinstance(v, Fraction) for v in t.a + t.b)
    assert sum(t.a) == 0
    assert sum(t.b) == 1


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_coefficients_are_exact_for_polynomials(k):
    a, b = SBDF_A[k], SBDF_B[k]
    # difference: sum_i a_i p(-i) = p'(0) for deg p <= k (time in units of tau)
    for m in range(k + 1):
        want = 1 if m == 1 else 0
        assert sum(a[i] * Fraction(-i) ** m for i in range(k + 1)) == want
    # extrapolation: sum_i b_i p(-i) = p(0) for deg p <= k - 1
    for m in range(k):
        assert sum(b[i - 1] * Fraction(-i) ** m for i in range(1, k + 1)) == (1 if m == 0 else 0)


def test_unknown_order():
    with pytest.raises(ValueError):
        sbdf_table(5)


def test_zero_data_is_a_fixed_point():
    problem = zero_problem()
    sim = Simulation(problem, Params(k=3, h=1 / 16, tau=1 / 16))
    sim.startup()
    p0 = sim.records[0].curve.control_points.copy()
    for _ in range(10):
        rec = sim.advance()
        assert np.all(rec.solution.coef == 0.0)
        # the patch-map inversion returns the identity up to roundoff only
        np.testing.assert_allclose(rec.curve.control_points, p0, rtol=0, atol=1e-12 / 16)
    assert rec.n == 2 + 10


def test_startup_follows_exact_rotation():
    problem = example(1)
    tau = np.pi / 32
    sim = Simulation(problem, Params(k=3, h=1 / 32, tau=tau))
    recs = sim.startup()
    assert [r.n for r in recs] == [0, 1, 2]
    p0 = recs[0].curve.control_points
    want = rotation_flow(p0, 0.0, 2 * tau)
    np.testing.assert_allclose(recs[2].curve.control_points, want, atol=1e-12)
    # startup velocities interpolate the exact field
    for r in recs:
        np.testing.assert_allclose(
            r.solution.coef.T, problem.velocity(r.dofmap.node_coords, r.t), atol=1e-14
        )


def test_startup_interpolates_velocity_example3():
    problem = example(3)
    sim = Simulation(problem, Params(k=4, h=1 / 32, tau=1 / 32))
    recs = sim.startup()
    r = recs[3]
    assert r.n == 3 and abs(r.t - 3 / 32) < 1e-15
    np.testing.assert_allclose(
        r.solution.coef.T, problem.velocity(r.dofmap.node_coords, r.t), atol=0
    )


def domain_l2_error(rec, problem):
    g = rec.geo
    grid = g.grid
    xi, w = gauss_square(6)
    X = (grid.corner(g.interior)[:, None, :] + grid.h * xi[None]).reshape(-1, 2)
    W = np.tile(grid.h**2 * w, len(g.interior))
    Xr, Wr, _ = region_quadrature(g.regions, n=6)
    X = np.vstack([X, Xr.reshape(-1, 2)])
    W = np.concatenate([W, Wr.ravel()])
    d = problem.velocity(X, rec.t) - rec.solution(X)
    return np.sqrt(np.sum(W * np.sum(d * d, axis=1)))


def test_one_step_local_error_order():
    problem = example(1)
    errs = []
    for inv in (16, 32):
        h = 1 / inv
        sim = Simulation(problem, Params(k=2, h=h, tau=np.pi * h))
        sim.startup()
        rec = sim.startup()[-1]
        rec = sim.advance()
        errs.append(domain_l2_error(rec, problem))
    assert errs[0] / errs[1] >= 3.5


def test_failure_is_wrapped_with_step_and_phase():
    def vel(x, t):
        return np.tile([3.0, 0.0], (len(np.atleast_2d(x)), 1))

    def zero2(x, t):
        return np.zeros((len(np.atleast_2d(x)), 2, 2))

    def zero(x, t):
        return np.zeros((len(np.atleast_2d(x)), 2))

    drift = ManufacturedProblem(
        "drift", vel, zero2, zero, zero, EllipseCurve((0.5, 0.5), 0.2, 0.2), T=1.0,
        tau_factor=1.0, box=(0.0, 1.0),
        exact_flow=lambda x, t0, t1: np.asarray(x) + [3.0 * (t1 - t0), 0.0],
    )
    sim = Simulation(drift, Params(k=2, h=1 / 16, tau=1 / 16))
    with pytest.raises(StepFailure) as info:
        sim.run()
    diag = info.value.diagnostic()
    assert diag["error"] == "StepFailure"
    assert diag["phase"] == "classification"
    assert diag["step"] >= 2
    assert isinstance(info.value.__cause__, NumericalFailure)
    assert sim.failed_curve is not None


def test_history_is_bounded():
    sim = Simulation(zero_problem(), Params(k=2, h=1 / 16, tau=1 / 16))
    sim.startup()
    for _ in range(5):
        sim.advance()
    assert len(sim.records) == 2
    assert len(sim.steps) == 5
    assert {"n", "t", "n_points", "n_dofs", "seconds"} <= set(sim.steps[-1])


def test_n_steps_requires_integer_ratio():
    sim = Simulation(zero_problem(T=1.0), Params(k=1, h=1 / 16, tau=0.3))
    with pytest.raises(ValueError):
        sim.n_steps()
