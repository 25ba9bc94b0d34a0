"""Exception types raised across the package.

The CLI maps these onto exit codes: validation and contract problems exit
with 1, solver non-convergence with 2.
"""


class ValidationError(ValueError):
    """A model, instance or config failed validation."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    last_span : float
        Span of the last successive-iterate difference.
    """

    def __init__(self, message, last_span=float("nan")):
        super().__init__(message)
        self.last_span = last_span


class NonIndexableError(RuntimeError):
    """No sign change of the active/passive advantage could be bracketed."""


class DivergenceError(RuntimeError):
    """The learner produced a non-finite iterate.

    ``snapshot`` holds a copy of the learner state at the time of failure.
    """

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot
