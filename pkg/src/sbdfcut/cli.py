"""Command line: ``run``, ``study`` and ``snapshot``.

Exit status is 0 on success and 2 on a numerical failure, in which case a JSON
diagnostic is printed on stderr; usage errors exit with 1.
``SBDFCUT_NUM_THREADS`` sets the number of worker processes used by ``study``
(one refinement level per process).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import NumericalFailure, UnknownExample

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 always means a numerical failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads() -> int:
    raw = os.environ.get("SBDFCUT_NUM_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise SystemExit(f"SBDFCUT_NUM_THREADS must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--example", type=int, required=True, choices=(1, 2, 3))
    p.add_argument("--order", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--gamma", type=_positive, default=1e-3, help="ghost-penalty parameter")
    p.add_argument("--eta-factor", type=_positive, default=0.5, help="eta = factor * h")
    p.add_argument("--delta", type=_positive, default=0.01, help="removal threshold factor")
    p.add_argument("--solver", choices=("direct", "cg"), default="direct")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sbdfcut", description="SBDF-k cut finite elements on tracked moving domains"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one run; writes report JSON and CSV")
    _common(run)
    run.add_argument("--h", type=_positive, required=True)
    run.add_argument("--tau", type=_positive, default=None)
    run.add_argument("--out", type=Path, default=Path("."))
    run.add_argument("--dump-geometry", action="store_true",
                     help="write classification and cut-region JSON of the last step")
    run.add_argument("--export-matrix", action="store_true",
                     help="write the last step matrix in Matrix Market format")

    study = sub.add_parser("study", help="convergence study over several levels")
    _common(study)
    study.add_argument("--levels", type=_int_list, required=True, help="e.g. 16,32,64")
    study.add_argument("--out", type=Path, default=Path("."))

    snap = sub.add_parser("snapshot", help="tracked curves at selected step times")
    _common(snap)
    snap.add_argument("--h", type=_positive, required=True)
    snap.add_argument("--times", type=_float_list, required=True)
    snap.add_argument("--out", type=Path, default=Path("."))
    return parser


def _fail(diag: dict, out: Path | None = None) -> int:
    text = json.dumps(diag, indent=1, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "failure.json").write_text(text + "\n")
    return EXIT_NUMERICAL


def _options(args) -> dict:
    return dict(gamma=args.gamma, eta_factor=args.eta_factor, delta=args.delta,
                solver=args.solver)


def cmd_run(args) -> int:
    from . import harness

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    rep = harness.run_example(args.example, args.order, args.h, tau=args.tau, **_options(args))
    stem = f"run_ex{args.example}_k{args.order}_n{round(1 / args.h)}"
    (out / f"{stem}.json").write_text(json.dumps(rep.to_json(), indent=1) + "\n")
    (out / f"{stem}.csv").write_text(harness.report_csv(rep))
    if rep.ok and args.dump_geometry:
        harness.dump_geometry(rep.sim.records[-1], out)
    if rep.ok and args.export_matrix:
        harness.export_step_matrix(rep.sim, out)
    if not rep.ok:
        return _fail(rep.failure, out)
    print(harness.study_table([rep]), end="")
    return EXIT_OK


def cmd_study(args) -> int:
    from . import harness

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    reps = harness.convergence_study(
        args.example, args.order, args.levels, jobs=_threads(), **_options(args)
    )
    stem = f"study_ex{args.example}_k{args.order}"
    (out / f"{stem}.csv").write_text(harness.study_csv(reps))
    (out / f"{stem}.json").write_text(
        json.dumps([r.to_json() for r in reps], indent=1) + "\n"
    )
    table = harness.study_table(reps)
    (out / f"{stem}.txt").write_text(table)
    print(table, end="")
    failed = [r.failure for r in reps if not r.ok]
    if failed:
        return _fail({"error": "StudyFailure", "failed_levels": failed}, out)
    return EXIT_OK


def cmd_snapshot(args) -> int:
    from . import harness

    try:
        paths = harness.snapshot_domains(
            args.example, args.order, args.h, args.times, args.out, **_options(args)
        )
    except NumericalFailure as exc:
        return _fail(exc.diagnostic(), args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"run": cmd_run, "study": cmd_study, "snapshot": cmd_snapshot}[args.command](args)
    except UnknownExample as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
