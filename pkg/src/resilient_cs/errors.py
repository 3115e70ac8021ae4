"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Shapes of operands do not agree."""


class ConfigurationError(ValueError):
    """A parameter combination is invalid or infeasible."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class ParseError(ValueError):
    """Malformed input file; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset
