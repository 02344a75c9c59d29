"""SBDF-k cut finite elements for convection-diffusion on a tracked moving domain.

The domain boundary is a periodic cubic spline advected by the discrete flow;
velocities live in a ghost-penalty stabilized Q_k space on a fixed Cartesian
grid.  See :mod:`sbdfcut.harness` for runs and convergence studies.
"""

from .errors import NumericalFailure
from .harness import RunReport, convergence_study, run_example, snapshot_domains
from .problems import ManufacturedProblem, example
from .sbdf import Params, Simulation, sbdf_table

__all__ = [
    "ManufacturedProblem",
    "NumericalFailure",
    "Params",
    "RunReport",
    "Simulation",
    "convergence_study",
    "example",
    "run_example",
    "sbdf_table",
    "snapshot_domains",
]
