class InputError(ValueError):
    """Bad user input: mismatched shapes, out-of-range parameters, bad config."""


class NumericalError(RuntimeError):
    """An iterative method failed to converge or produced non-finite values."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class StepFailure(NumericalError):
    """A time step produced non-finite values; ``t`` is the time it started from."""

    def __init__(self, message, t):
        super().__init__(message)
        self.t = t
