"""Test helper: a closed polygon exposing the curve interface."""

import numpy as np

from sbdfcut.curves import _CurveOps


class PolygonCurve(_CurveOps):
    """Counterclockwise polygon parametrized by vertex index; straight cuts are exact."""

    def __init__(self, vertices):
        self.V = np.asarray(vertices, dtype=float)
        self.E = np.roll(self.V, -1, axis=0) - self.V
        self.split_params = np.arange(len(self.V), dtype=float)
        self.period = float(len(self.V))

    @property
    def breakpoints(self):
        return np.arange(len(self.V) + 1, dtype=float)

    def _loc(self, t):
        t = np.mod(np.asarray(t, dtype=float), self.period)
        j = np.minimum(np.floor(t).astype(int), len(self.V) - 1)
        return j, t - j

    def eval(self, t):
        j, s = self._loc(t)
        return self.V[j] + s[..., None] * self.E[j]

    def deriv(self, t, order=1):
        j, _ = self._loc(t)
        return self.E[j] if order == 1 else np.zeros_like(self.E[j])
