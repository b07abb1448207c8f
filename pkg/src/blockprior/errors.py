"""Exception hierarchy shared by all modules."""


class BlockPriorError(Exception):
    """Base class for every error raised by this package."""


class InvalidMatrix(BlockPriorError, ValueError):
    pass


class ShapeError(BlockPriorError, ValueError):
    pass


class NotPositiveDefinite(BlockPriorError, ValueError):
    """A matrix that must be invertible is singular or indefinite."""

    def __init__(self, lambda_min, block=None, message=None):
        self.lambda_min = float(lambda_min)
        self.block = block
        if message is None:
            where = f"block {block!r}" if block is not None else "matrix"
            message = (
                f"{where} is not positive definite "
                f"(smallest eigenvalue {self.lambda_min:.6g})"
            )
        super().__init__(message)


class NotPSD(BlockPriorError, ValueError):
    """An assembled joint covariance has a negative eigenvalue."""

    def __init__(self, lambda_min):
        self.lambda_min = float(lambda_min)
        super().__init__(
            f"joint covariance is not positive semi-definite "
            f"(smallest eigenvalue {self.lambda_min:.6g})"
        )


class InvalidCompletion(BlockPriorError, ValueError):
    pass


class ScenarioError(BlockPriorError, ValueError):
    """Inconsistent scenario data; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class MissingQuadraticMean(BlockPriorError):
    pass


class SamplingFailure(BlockPriorError, RuntimeError):
    pass


class BoundViolation(BlockPriorError, AssertionError):
    """A proven inequality failed numerically; indicates a bug, not bad input."""

    def __init__(self, message, index=None, completion=None):
        self.index = index
        self.completion = completion
        super().__init__(message)


class NegativeConditionalVariance(BlockPriorError, ValueError):
    def __init__(self, phi, variance):
        self.phi = phi
        self.variance = float(variance)
        super().__init__(
            f"conditional variance {self.variance:.6g} < 0 at phi={list(phi)}; "
            "the quadratic intrinsic-variance model is outside its validity region"
        )
