"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands disagree on dimension or truncation level."""


class ResourceError(RuntimeError):
    """A size or cost guard refused the requested computation."""


class SingularityError(ValueError):
    """A singular kernel was evaluated on its diagonal."""


class NumericError(ArithmeticError):
    """A numerical procedure failed (factorization, non-finite samples)."""
