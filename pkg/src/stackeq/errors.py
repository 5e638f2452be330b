"""Exception types shared across the solver stack."""


class GameConfigError(Exception):
    """A game description is internally inconsistent (dimensions, missing callables)."""


class InfeasiblePointError(Exception):
    """A point violates a constraint it was required to satisfy.

    Carries the offending constraint's index and label when known.
    """

    def __init__(self, message, index=None, label=None):
        super().__init__(message)
        self.index = index
        self.label = label


class InfeasibleSetError(Exception):
    """A constraint set admits no point at all."""


class UnboundedProblemError(Exception):
    """A linear program is unbounded below in the requested direction.

    ``ray`` is a feasible recession direction with negative objective
    slope when one could be certified.
    """

    def __init__(self, message, ray=None):
        super().__init__(message)
        self.ray = ray


class ProjectionError(Exception):
    """Projection failed to converge; carries the best iterate found."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ConvergenceError(Exception):
    """An iterative solver aborted; carries whatever partial result exists."""

    def __init__(self, message, trace=None, result=None):
        super().__init__(message)
        self.trace = trace
        self.result = result


class KKTError(Exception):
    """A point fails a first-order optimality check it was expected to pass."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InstanceFormatError(Exception):
    """An instance file could not be parsed; message carries field context."""


class UnsupportedInstanceError(Exception):
    """An operation's preconditions exclude this instance (e.g. no closed form)."""
