"""Exception hierarchy.

Every error raised deliberately by the package derives from :class:`HmmvaError`.
Parameter/config problems are ``ValueError`` subclasses, numerical dead ends
(impossible observations, empty classes) are ``ArithmeticError`` subclasses;
the command line maps the two groups to different exit codes.
"""


class HmmvaError(Exception):
    """Base class for all package errors."""


class ParameterError(HmmvaError, ValueError):
    """Invalid model parameters or configuration."""


class NonStochasticRow(ParameterError):
    pass


class NegativeEntry(ParameterError):
    pass


class NonStationaryInitial(ParameterError):
    pass


class BadEmissionParam(ParameterError):
    pass


class ReducibleChain(ParameterError):
    pass


class PeriodicChain(ParameterError):
    pass


class ModelFormatError(ParameterError):
    """Malformed model or observation file."""


class InstanceTooLarge(ParameterError):
    pass


class NumericalError(HmmvaError, ArithmeticError):
    """A computation had no well-defined answer for the given data."""


class AllPathsImpossible(NumericalError):
    pass


class EmptyClass(NumericalError):
    pass


class DegenerateVariance(NumericalError):
    pass


class EmptyCell(NumericalError):
    pass


class EmptyClassInAllReplicas(NumericalError):
    pass


class NoRegenerations(NumericalError):
    pass


class CorrectionUnavailable(NumericalError):
    pass
