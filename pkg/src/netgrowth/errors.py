"""Exception types shared across the package."""


class NumericError(RuntimeError):
    """A computation broke down numerically (non-PD covariance, overflow in
    a matrix exponential, ...) even though the inputs were well-formed."""
