"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Invalid input: bad spec, parameter out of range, shape mismatch."""


class InconsistencyError(ValueError):
    """Statistics that cannot have come from the claimed decomposition."""


class SessionStateError(RuntimeError):
    """Operation attempted on a closed grid session."""


class EquivalenceError(AssertionError):
    """Two mining protocols disagreed on the same input."""
