"""Exception types raised across the package."""


class PerifideError(Exception):
    pass


class InvalidArgument(PerifideError, ValueError):
    pass


class DomainError(PerifideError, ValueError):
    """A state left the open set on which the right-hand side is defined."""

    def __init__(self, message, node=None, t=None):
        super().__init__(message)
        self.node = node
        self.t = t


class UnsupportedModel(PerifideError):
    pass


class NoConvergence(PerifideError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SingularJacobian(PerifideError):
    pass


class HyperbolicityViolated(PerifideError):
    pass


class NonSimpleEigenvalue(PerifideError):
    pass


class NotAPitchfork(PerifideError):
    pass


class DegenerateUnclassified(PerifideError):
    def __init__(self, message, indicators=None):
        super().__init__(message)
        self.indicators = indicators


class StartAtSingularity(PerifideError):
    pass


class LocalizationFailed(PerifideError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
