"""Exception hierarchy.  Every numerical failure derives from :class:`NumericalFailure`."""

import numpy as np


def jsonable(value):
    """Plain-Python copy of ``value`` (numpy scalars/arrays become floats/lists)."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


class NumericalFailure(RuntimeError):
    """Base class; the CLI maps it to exit code 2 with a JSON diagnostic."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = dict(context)

    def diagnostic(self):
        return jsonable({"error": type(self).__name__, "message": str(self), **self.context})


class CurveOutsideDomain(NumericalFailure):
    pass


class SelfIntersection(NumericalFailure):
    pass


class DegenerateCurve(NumericalFailure):
    pass


class CollapsedCurve(NumericalFailure):
    pass


class MapEvaluationFailed(NumericalFailure):
    pass


class MultiArcCell(NumericalFailure):
    pass


class FoldedPatch(NumericalFailure):
    pass


class HistoryMissing(NumericalFailure):
    pass


class PointOutsideHistoryDomain(NumericalFailure):
    pass


class NewtonDivergence(NumericalFailure):
    pass


class NoRegionFound(NumericalFailure):
    pass


class NotSPD(NumericalFailure):
    pass


class SolverFailure(NumericalFailure):
    pass


class StepFailure(NumericalFailure):
    """Wraps a module error with the step index and phase it occurred in."""


class UnknownExample(ValueError):
    pass


class NotSupported(ValueError):
    pass
