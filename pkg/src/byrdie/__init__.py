"""Byzantine-resilient decentralized learning by coordinate descent."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ByrdieError,
    ConfigError,
    ConvergenceFailure,
    DegreeViolation,
    DimensionError,
    EnumerationBudgetExceeded,
    NumericFault,
    ParseError,
    ProtocolViolation,
)
