"""Exception hierarchy for the solver."""


class ReptalkError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ReptalkError, ValueError):
    """An argument lies outside the domain of the function."""


class TableFormatError(ReptalkError, ValueError):
    """A tabulated experiment is malformed; the message names the row."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class InconsistentExperimentError(ReptalkError):
    """Support endpoints do not induce the required belief ordering."""


class SingleCrossingError(ReptalkError):
    """Belief distributions of the two types do not cross exactly once."""


class DegenerateCutoffError(ReptalkError):
    """A cutoff leaves some (report, state) cell with zero probability."""


class NoEquilibriumError(ReptalkError):
    """The experiment pair admits no informative equilibrium."""


class InternalConsistencyError(ReptalkError):
    """A bracket that theory guarantees failed to change sign."""
