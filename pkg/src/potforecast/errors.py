"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the prediction/outcome domain, or mismatched dimensions."""


class SequencingError(RuntimeError):
    """A game was driven past its horizon or fed streams of the wrong length."""


class DegenerateGradientError(ValueError):
    """The potential gradient sums to (numerically) zero."""


class InvariantViolation(RuntimeError):
    """A per-round inequality that should hold failed beyond tolerance."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


class BudgetExceeded(ValueError):
    """A brute-force computation would exceed its work budget."""

    def __init__(self, message, required=None, budget=None):
        super().__init__(message)
        self.required = required
        self.budget = budget


class VertexScanRefused(ValueError):
    """Enumerating all sign vectors in {-1, 1}^N is too expensive."""
