"""Acceptance criteria: convergence orders, properties and determinism.

Each test logs one PASS/FAIL line (repeated in the terminal summary) and then
asserts.  Convergence runs are shared with other modules through
``converged_run``.
"""

import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from conftest import converged_run, level, record
from test_fem import global_poly, squared_jumps
from test_flowmaps import random_image_points
from test_polybasis import exact_square, exact_triangle
from test_tracking import shear

from sbdfcut.curves import EllipseCurve, curve_area
from sbdfcut.fem import FEFunction, assemble, is_spd
from sbdfcut.flowmaps import BackwardMap, build_patch_map
from sbdfcut.geometry import cellwise_areas
from sbdfcut.harness import observed_orders
from sbdfcut.polybasis import QUAD, TRIANGLE, element_rule
from sbdfcut.problems import zero_problem
from sbdfcut.sbdf import Params, Simulation, sbdf_table
from sbdfcut.tracking import initial_curve, track_surface


def orders(idx, k, levels, name):
    reps = [converged_run(idx, k, n) for n in levels]
    failed = [n for n, r in zip(levels, reps) if not r.ok]
    errs = [getattr(r, name) for r in reps]
    return reps, failed, errs, observed_orders(errs, [r.h for r in reps])[1:]


def _fmt(values):
    return "[" + ", ".join(f"{v:.2f}" for v in values) + "]"


def _within(values, lo, hi):
    return all(lo <= v <= hi for v in values)


@pytest.mark.slow
def test_criterion_1_ex1_sbdf3():
    reps, failed, e0, o0 = orders(1, 3, (16, 32, 64), "e0")
    seconds = sum(r.seconds for r in reps)
    ok_orders = not failed and _within(o0, 2.6, 3.4)
    ok_level = reps[1].ok and 1.36e-6 / 3 <= e0[1] <= 1.36e-6 * 3
    ok_time = seconds < 300
    ok = record(
        "1", ok_orders and ok_level and ok_time,
        f"Ex1 SBDF-3 e0 orders {_fmt(o0)} in [2.6, 3.4]; e0(1/32) = {e0[1]:.3e} "
        f"(reference 1.36e-06, factor 3); runtime {seconds:.0f} s < 300 s",
    )
    assert ok


@pytest.mark.slow
def test_criterion_2_ex1_sbdf4():
    _, failed, _, o0 = orders(1, 4, (16, 32), "e0")
    _, _, _, oo = orders(1, 4, (16, 32), "eOmega")
    ok = record(
        "2", not failed and _within(o0, 3.6, 4.4) and _within(oo, 3.4, 4.4),
        f"Ex1 SBDF-4 e0 order {_fmt(o0)} in [3.6, 4.4]; eOmega order {_fmt(oo)} in [3.4, 4.4]",
    )
    assert ok


@pytest.mark.slow
def test_criterion_3_ex2_sbdf3():
    _, failed, _, o1 = orders(2, 3, (16, 32, 64), "e1")
    ok = record(
        "3", not failed and _within(o1, 2.6, 3.4),
        f"Ex2 SBDF-3 e1 orders {_fmt(o1)} in [2.6, 3.4]" + (f"; failed {failed}" if failed else ""),
    )
    assert ok


@pytest.mark.slow
def test_criterion_4_ex3_sbdf3():
    _, failed, _, oo = orders(3, 3, (32, 64), "eOmega")
    ok = record(
        "4", not failed and _within(oo, 2.4, 3.4),
        f"Ex3 SBDF-3 eOmega order {_fmt(oo)} in [2.4, 3.4]" + (f"; failed {failed}" if failed else ""),
    )
    assert ok


def test_criterion_5a_coefficient_sums_exact():
    tables = [sbdf_table(k) for k in (1, 2, 3, 4)]
    ok = record(
        "5a", all(sum(t.a) == 0 for t in tables),
        "sum of SBDF a-coefficients is exactly 0 for k = 1..4 (rational arithmetic)",
    )
    assert ok


def test_criterion_5b_quadrature_exactness():
    worst = 0.0
    for k in (1, 2, 3, 4):
        for kind, exact in ((QUAD, exact_square), (TRIANGLE, exact_triangle)):
            xi, w = element_rule(kind, k)
            for a in range(2 * k + 2):
                for b in range(2 * k + 2 - (a if kind == TRIANGLE else 0)):
                    got = np.sum(w * xi[:, 0] ** a * xi[:, 1] ** b)
                    worst = max(worst, abs(got - float(exact(a, b))))
    ok = record("5b", worst < 1e-14, f"monomials to degree 2k+1 integrated to {worst:.1e} < 1e-14")
    assert ok


def test_criterion_5c_ghost_penalty_on_polynomials():
    worst = 0.0
    for k in (1, 2, 3, 4):
        _, _, _, cls, _, dm = level(2, 32, k)
        w = FEFunction.interpolate(dm, lambda x: global_poly(x, k))
        worst = max(worst, squared_jumps(w, cls, k) / float(np.sum(w.coef[0] ** 2)))
    ok = record("5c", worst <= 1e-20, f"ghost penalty J(p, p) / |p|^2 = {worst:.1e} <= 1e-20")
    assert ok


def test_criterion_5d_round_trip():
    worst = 0.0
    rng = np.random.default_rng(2024)
    for idx in (1, 2, 3):
        problem, grid, _, _, geo, _ = level(idx, 32, 3)
        tau = problem.tau_factor * grid.h
        pm = build_patch_map(geo, lambda x: problem.flow(x, 0.0, tau))
        back = BackwardMap(pm)
        x = random_image_points(pm, 1000, rng)
        err = np.max(np.linalg.norm(back.forward(back(x)) - x, axis=1)) / grid.h
        worst = max(worst, err)
    ok = record("5d", worst <= 1e-10, f"backward/forward round trip {worst:.1e} h <= 1e-10 h")
    assert ok


def test_criterion_5e_step_operator_spd():
    good = []
    for idx in (1, 2, 3):
        problem, grid, _, _, geo, dm = level(idx, 32, 3)
        A = assemble(geo, dm).step_matrix(
            sbdf_table(3).af[0], problem.tau_factor * grid.h, problem.nu, 1e-3
        )
        good.append(is_spd(A))
    ok = record("5e", all(good), f"a0 M + tau A Cholesky succeeds on Ex1-3 at h = 1/32: {good}")
    assert ok


def test_criterion_5f_zero_data_fixed_point():
    sim = Simulation(zero_problem(), Params(k=3, h=1 / 16, tau=1 / 16))
    sim.startup()
    p0 = sim.records[0].curve.control_points.copy()
    zero, drift = True, 0.0
    for _ in range(10):
        rec = sim.advance()
        zero &= bool(np.all(rec.solution.coef == 0.0))
        drift = max(drift, float(np.max(np.abs(rec.curve.control_points - p0))))
    # the curve moves by roundoff of the patch-map inversion only
    ok = record(
        "5f", zero and drift <= 1e-12 * sim.params.h,
        f"zero data: solution exactly zero = {zero}; curve drift {drift:.1e} over 10 steps",
    )
    assert ok


def test_criterion_5g_spline_order_on_circles():
    c, r = np.array([0.5, 0.5]), 0.25
    fwd, inv = shear()
    errs = []
    for eta in (1 / 64, 1 / 128, 1 / 256):
        cur = track_surface(initial_curve(EllipseCurve(tuple(c), r, r), eta), fwd, eta)
        z = cur.sample(20000)
        errs.append(np.max(np.abs(np.linalg.norm(inv(z) - c, axis=1) - r)))
    o = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = record("5g", bool(np.all(o >= 3.5)), f"spline geometric orders {_fmt(o)} >= 3.5")
    assert ok


def test_criterion_5h_area_partition():
    worst = 0.0
    for idx in (1, 2, 3):
        for k in (3, 4):
            _, grid, curve, _, geo, _ = level(idx, 32, k)
            area = curve_area(curve)
            worst = max(worst, abs(geo.area() - area))
            # exact cellwise areas partition the domain for every order
            worst = max(worst, abs(float(np.sum(cellwise_areas(curve, grid))) - area))
    ok = record("5h", worst <= 1e-9, f"interior + cut-region areas vs curve area {worst:.1e} <= 1e-9")
    assert ok


def test_criterion_6_study_csv_deterministic(tmp_path):
    src = str(Path(__file__).resolve().parents[1] / "src")
    env = dict(os.environ, PYTHONPATH=src + os.pathsep + os.environ.get("PYTHONPATH", ""))
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        cmd = [sys.executable, "-m", "sbdfcut", "study", "--example", "1", "--order", "3",
               "--levels", "8,16", "--out", str(out)]
        subprocess.run(cmd, check=True, env=env, capture_output=True)
        blobs.append((out / "study_ex1_k3.csv").read_bytes())
    ok = record("6", blobs[0] == blobs[1] and len(blobs[0]) > 0,
                "two identical study invocations give byte-identical CSVs")
    assert ok
