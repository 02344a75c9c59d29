"""Runs, convergence studies and domain snapshots for the manufactured examples."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalFailure, jsonable
from .problems import ManufacturedProblem, example
from .sbdf import Params, Simulation, area_error, l2_error_exact_domain

CSV_COLUMNS = ("h", "tau", "e0", "order0", "e1", "order1", "eOmega", "orderOmega")


@dataclass
class RunReport:
    """Errors and diagnostics of one run at one refinement level."""

    example: int
    k: int
    h: float
    tau: float
    T: float
    n_steps: int
    gamma: float
    eta_factor: float
    delta: float
    e0: float = math.nan
    e1: float = math.nan
    eOmega: float = math.nan
    seconds: float = 0.0
    ok: bool = True
    failure: dict | None = None
    steps: list = field(default_factory=list)

    def to_json(self) -> dict:
        return jsonable(asdict(self))


def make_params(problem: ManufacturedProblem, k, h, tau=None, gamma=1e-3, eta_factor=0.5,
                delta=0.01, solver="direct") -> Params:
    tau = problem.tau_factor * h if tau is None else tau
    return Params(k=k, h=h, tau=tau, gamma=gamma, eta_factor=eta_factor, delta=delta,
                  solver=solver)


def run_example(idx: int, k: int, h: float, tau: float | None = None, gamma: float = 1e-3,
                eta_factor: float = 0.5, delta: float = 0.01, solver: str = "direct",
                callback=None, raise_on_failure: bool = False) -> RunReport:
    """Integrate example ``idx`` to its final time and evaluate ``e0``, ``e1``, ``e_Omega``.

    Numerical failures are recorded in the report (``ok=False``) unless
    ``raise_on_failure`` is set.
    """
    problem = example(idx)
    params = make_params(problem, k, h, tau, gamma, eta_factor, delta, solver)
    sim = Simulation(problem, params)
    report = RunReport(idx, k, h, params.tau, problem.T, 0, gamma, eta_factor, delta)
    clock = time.perf_counter()
    try:
        report.n_steps = sim.n_steps()
        last = sim.run(callback)
        report.e0 = l2_error_exact_domain(last, problem)
        report.e1 = math.sqrt(sim.e1_sq)
        report.eOmega = area_error(last, problem)
    except NumericalFailure as exc:
        if raise_on_failure:
            raise
        report.ok = False
        report.failure = exc.diagnostic()
    report.seconds = time.perf_counter() - clock
    report.steps = sim.steps
    report.sim = sim  # not serialized; lets callers inspect the last records
    return report


def observed_orders(errors, hs):
    """``log2(e(h) / e(h/2))`` between consecutive levels (NaN where undefined)."""
    out = [math.nan]
    for (e_a, h_a), (e_b, h_b) in zip(zip(errors, hs), zip(errors[1:], hs[1:])):
        if e_a > 0 and e_b > 0 and np.isfinite(e_a) and np.isfinite(e_b):
            out.append(math.log(e_a / e_b) / math.log(h_a / h_b))
        else:
            out.append(math.nan)
    return out


def _level_job(args):
    idx, k, inv_h, kw = args
    rep = run_example(idx, k, 1.0 / inv_h, **kw)
    del rep.sim
    return rep


def convergence_study(idx: int, k: int, levels, jobs: int = 1, **kw) -> list[RunReport]:
    """One run per level ``h = 1/level``; failed levels are reported and the rest still run."""
    tasks = [(idx, k, int(n), kw) for n in levels]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_level_job, tasks))
    return [_level_job(t) for t in tasks]


def study_rows(reports: list[RunReport]) -> list[dict]:
    hs = [r.h for r in reports]
    cols = {}
    for name, order in (("e0", "order0"), ("e1", "order1"), ("eOmega", "orderOmega")):
        cols[name] = [getattr(r, name) for r in reports]
        cols[order] = observed_orders(cols[name], hs)
    rows = []
    for i, r in enumerate(reports):
        rows.append(
            {
                "h": r.h,
                "tau": r.tau,
                "e0": cols["e0"][i],
                "order0": cols["order0"][i],
                "e1": cols["e1"][i],
                "order1": cols["order1"][i],
                "eOmega": cols["eOmega"][i],
                "orderOmega": cols["orderOmega"][i],
            }
        )
    return rows


def _fmt(name, value):
    if value is None or (isinstance(value, float) and not np.isfinite(value)):
        return "-" if name.startswith("order") else "nan"
    if name.startswith("order"):
        return f"{value:.2f}"
    if name in ("h", "tau"):
        return repr(float(value))
    return f"{value:.6e}"


def study_csv(reports: list[RunReport]) -> str:
    """CSV text with fixed formatting (byte-identical for identical inputs)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in study_rows(reports):
        w.writerow([_fmt(c, row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def study_table(reports: list[RunReport]) -> str:
    """Fixed-width text table mirroring the CSV."""
    head = ("1/h", "e0", "order", "e1", "order", "eOmega", "order")
    lines = ["  ".join(f"{c:>12}" for c in head)]
    for r, row in zip(reports, study_rows(reports)):
        cells = [f"{round(1 / r.h):d}"]
        for c in ("e0", "order0", "e1", "order1", "eOmega", "orderOmega"):
            cells.append(_fmt(c, row[c]))
        if not r.ok:
            cells.append(f"FAILED: {r.failure.get('message', '')}")
        lines.append("  ".join(f"{c:>12}" for c in cells))
    return "\n".join(lines) + "\n"


def report_csv(report: RunReport) -> str:
    return study_csv([report])


# --------------------------------------------------------------------------
# snapshots


def match_step_times(times, tau, T, tol=1e-9):
    """Step indices for requested times; every time must be a multiple of ``tau``."""
    out = []
    for t in times:
        n = round(t / tau)
        if abs(n * tau - t) > tol * max(1.0, T) or n < 0 or n * tau > T * (1 + tol):
            raise ValueError(f"time {t} is not a step time (tau = {tau})")
        out.append(int(n))
    return out


def snapshot_domains(idx: int, k: int, h: float, times, out_dir, n_dense: int = 512,
                     **kw) -> list[Path]:
    """Run example ``idx`` and write the tracked curve at each requested time.

    Each snapshot is ``snapshot_<n>.json`` (control points, knots, total length,
    densified samples) plus ``snapshot_<n>.csv`` with the samples.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = example(idx)
    params = make_params(problem, k, h, kw.pop("tau", None), **kw)
    wanted = set(match_step_times(times, params.tau, problem.T))
    last = max(wanted) if wanted else 0
    written: list[Path] = []

    def grab(rec):
        if rec.n in wanted:
            data = {"example": idx, "k": k, "h": h, "step": rec.n, "t": rec.t}
            data.update(rec.curve.to_json(n_dense=n_dense))
            p = out_dir / f"snapshot_{rec.n:05d}.json"
            p.write_text(json.dumps(data, indent=1) + "\n")
            written.append(p)
            q = out_dir / f"snapshot_{rec.n:05d}.csv"
            with q.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("x", "y"))
                w.writerows(np.asarray(data["samples"]).tolist())
            written.append(q)

    sim = Simulation(problem, params)
    sim.startup()
    for rec in sim.records:
        grab(rec)
    while sim.records[-1].n < last:
        grab(sim.advance())
    return written


# --------------------------------------------------------------------------
# debug dumps


def dump_geometry(rec, out_dir) -> list[Path]:
    """Classification and cut-region lattices of one step as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    a = out_dir / f"classification_{rec.n:05d}.json"
    a.write_text(json.dumps(rec.geo.cls.to_json()) + "\n")
    b = out_dir / f"regions_{rec.n:05d}.json"
    b.write_text(json.dumps(rec.geo.regions.to_json()) + "\n")
    return [a, b]


def export_step_matrix(sim: Simulation, out_dir) -> Path:
    """Matrix Market file of ``a0 M + tau A`` on the last level."""
    from scipy.io import mmwrite

    from .fem import assemble

    rec = sim.records[-1]
    p = sim.params
    ops = assemble(rec.geo, rec.dofmap)
    A = ops.step_matrix(sim.table.af[0], p.tau, sim.nu, p.gamma)
    path = Path(out_dir) / f"step_matrix_{rec.n:05d}.mtx"
    mmwrite(str(path), A.tocoo())
    return path
