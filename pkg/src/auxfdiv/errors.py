"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation received inputs outside its contract (shapes, keys, ranges)."""


class DomainError(ArithmeticError):
    """An operation was evaluated outside its numeric domain."""


class NumericFailure(ArithmeticError):
    """A numeric procedure failed to converge or overflowed."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
