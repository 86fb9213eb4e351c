"""Flow-level fat-tree simulation and Monte Carlo loss-risk analysis."""

from flowrisk.errors import (
    FlowRiskError,
    InvalidParameterError,
    NoAcceptableFitError,
    NoLossesError,
)

__version__ = "0.1.0"

__all__ = [
    "FlowRiskError",
    "InvalidParameterError",
    "NoAcceptableFitError",
    "NoLossesError",
    "__version__",
]
