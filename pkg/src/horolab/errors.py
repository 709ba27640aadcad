"""Exception types shared across the package."""


class HorolabError(Exception):
    """Base class for library errors."""


class DomainError(HorolabError, ValueError):
    """Argument outside the domain of an operation."""


class PreconditionError(HorolabError, ValueError):
    """A documented precondition does not hold."""


class InvalidIsometryError(HorolabError, ValueError):
    """Isometry not admissible for the model."""


class ConvergenceError(HorolabError, RuntimeError):
    """Iterative solver failed; carries the best residual reached."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class TruncationError(HorolabError, RuntimeError):
    """Integration stopped early; carries the time actually reached."""

    def __init__(self, message, achieved_time=float("nan")):
        super().__init__(f"{message} (reached t={achieved_time:.6g})")
        self.achieved_time = achieved_time
