"""Exception types raised across the package."""


class ByrdieError(Exception):
    """Base class for all package errors."""


class ConfigError(ByrdieError, ValueError):
    """Invalid parameters or an infeasible experiment configuration."""


class ParseError(ByrdieError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegreeViolation(ConfigError):
    """Some node has fewer than 2b+1 in-neighbors."""

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


class EnumerationBudgetExceeded(ByrdieError):
    """Exact enumeration of reduced graphs would exceed the configured budget."""

    def __init__(self, count, budget):
        self.count = count
        self.budget = budget
        super().__init__(
            f"too large to enumerate: {count} reduced graphs exceeds budget {budget}; "
            "use sampled certification instead"
        )


class ProtocolViolation(ByrdieError):
    """A node received too few values to screen, or a message was missing."""


class NumericFault(ByrdieError, ArithmeticError):
    """A non-finite value appeared in an honest node's state."""

    def __init__(self, message, context=None):
        self.context = dict(context or {})
        if self.context:
            detail = ", ".join(f"{k}={v}" for k, v in self.context.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class DimensionError(ByrdieError, ValueError):
    """Parameter vector, data, or coordinate index do not agree in size."""


class ConvergenceFailure(ByrdieError):
    """An iterative solver hit its iteration cap before meeting its tolerance."""
