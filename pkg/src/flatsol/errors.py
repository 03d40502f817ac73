"""Exception types shared across the toolkit."""


class FlatsolError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 3


class ConfigError(FlatsolError, ValueError):
    exit_code = 2


class DomainError(FlatsolError, ValueError):
    pass


class UnsupportedCaseError(DomainError):
    pass


class PreconditionError(DomainError):
    pass


class SolverError(FlatsolError, RuntimeError):
    """A numerical method failed; ``diagnostics`` carries what it had."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class NoFlatSolutionError(SolverError):
    pass


class GeometryError(DomainError):
    pass


class SchemeFailure(SolverError):
    pass


class ConstructionError(DomainError):
    """A constant of the subsolution construction violates its constraint."""

    def __init__(self, message, equation=None):
        super().__init__(message)
        self.equation = equation
