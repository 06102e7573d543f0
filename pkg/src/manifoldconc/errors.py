"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class ManifoldError(ValueError):
    """A matrix is not (close enough to) a point of the requested manifold."""


class ValidityError(ValueError):
    """A tail bound is evaluated outside the parameter range where it holds.

    Attributes
    ----------
    threshold : float or None
        The boundary value of the violated condition, when there is one.
    """

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold
