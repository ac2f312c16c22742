"""Flow-algebra representations twisted by connections.

Vector-field flows act on sections of a trivial Hermitian bundle through
parallel transport and a density-correcting factor. The subpackages build
those operators on grids (``representation``), on finite orbits
(``discrete``), and probe gauge equivalence and reducibility.
"""
from .connection import SmoothConnection, holonomy
from .flow_algebra import AlgebraElement, FlowWord
from .geometry import ChartDomain, ConformalMetric, FlatMetric
from .representation import GridSpec, Representer, operator_norm_estimate

__all__ = [
    "AlgebraElement",
    "ChartDomain",
    "ConformalMetric",
    "FlatMetric",
    "FlowWord",
    "GridSpec",
    "Representer",
    "SmoothConnection",
    "holonomy",
    "operator_norm_estimate",
]
__version__ = "0.1.0"
