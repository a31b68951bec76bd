"""Exception and warning types shared across the package."""


class MrpChanError(Exception):
    """Base class for all package errors."""


class InputError(MrpChanError, ValueError):
    """Invalid user input (bad rates, malformed config, wrong shapes)."""


class CapabilityError(MrpChanError):
    """Requested object cannot be represented in the closed density family."""


class NonConvergentSeriesError(MrpChanError):
    """Hidden-block convolution series does not converge (spectral radius >= 1)."""


class UnstableDensityError(MrpChanError):
    """Laplace inversion produced a growing exponential (pole in the right half plane)."""


class FilterDegeneracyError(MrpChanError):
    """Posterior weight vector collapsed to zero; model and data are inconsistent."""

    def __init__(self, message, mark=None, waiting=None):
        super().__init__(message)
        self.mark = mark
        self.waiting = waiting


class StructuralError(MrpChanError):
    """Chain structure violates a requirement (reducible, absorbing hidden block, ...)."""


class RefinementError(MrpChanError):
    """Grid solution did not converge under mesh refinement."""


class ConditioningWarning(UserWarning):
    """Nearly-repeated roots made a partial-fraction expansion ill conditioned."""
