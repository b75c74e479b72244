"""Exception types shared across the package."""


class SpecError(ValueError):
    """A road, network or run description is invalid."""


class NumericalDivergence(ArithmeticError):
    """The vehicle state left the finite, bounded region."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InsufficientData(RuntimeError):
    """The replay buffer holds fewer transitions than requested."""


class ShapeMismatch(ValueError):
    """Two networks or a network and its serialized form disagree in shape."""


class EmptyInput(ValueError):
    """A metric was asked to reduce over zero samples."""
