"""Exception hierarchy shared by all flowrisk modules."""


class FlowRiskError(Exception):
    pass


class InvalidParameterError(FlowRiskError, ValueError):
    pass


class InfeasibleFitError(InvalidParameterError):
    """A family cannot be fitted to the data (support or dispersion mismatch)."""


class NoAcceptableFitError(FlowRiskError):
    """No candidate family passed KS or AD. ``reports`` holds the full cascade."""

    def __init__(self, message, reports=()):
        super().__init__(message)
        self.reports = list(reports)


class NoLossesError(FlowRiskError):
    pass


class SimulationError(FlowRiskError, RuntimeError):
    pass


class SchemaError(FlowRiskError, ValueError):
    pass
