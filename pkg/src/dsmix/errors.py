"""Exception types shared across the package."""


class UsageError(ValueError):
    """Caller violated a documented precondition or supplied unusable input."""


class ParseError(UsageError):
    """Input file could not be parsed; carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateInputError(ValueError):
    """Geometric operation has no unique answer for this input (e.g. antipodal points)."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond recovery (singular matrix, divergence)."""


class IntegrationError(NumericalError):
    """Trajectory integration hit a non-finite state; carries the partial trace."""

    def __init__(self, message, partial_trace=None):
        super().__init__(message)
        self.partial_trace = partial_trace
