"""Shared exception types."""


class ParameterError(ValueError):
    """A model parameter or state violates its documented constraints."""


class IntegrationError(RuntimeError):
    """The integrator produced a non-finite state; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """Config text failed to parse or validate.

    ``errors`` holds every violation found, not just the first; each entry
    names the offending line number or field path.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class SweepTimeoutError(RuntimeError):
    """Every trial of a sweep timed out at some threshold."""

    def __init__(self, theta, trials):
        self.theta = theta
        self.trials = trials
        super().__init__(
            f"all {trials} trials timed out at theta={theta}: "
            "error rate undefined (increase t_max or lower the threshold)"
        )


class FitError(RuntimeError):
    """Least-squares fit failed (rank-deficient design matrix)."""
