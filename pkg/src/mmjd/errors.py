"""Exception hierarchy shared across the package."""


class MmjdError(Exception):
    """Base class for all package errors."""


class ValidationError(MmjdError, ValueError):
    """A parameter, matrix, or input file violates a documented invariant."""


class DataError(ValidationError):
    """An input data file is malformed (bad row, bad column, bad ordering)."""


class EstimationError(MmjdError, RuntimeError):
    """An estimation stage cannot produce a result (hard numerical failure)."""


class BridgeStallError(EstimationError):
    """Endpoint-conditioned path sampling exhausted its attempt budget."""

    def __init__(self, start: int, end: int, length: float, attempts: int, accepted: int):
        self.start = start
        self.end = end
        self.length = length
        self.attempts = attempts
        self.acceptance = accepted / attempts if attempts else 0.0
        super().__init__(
            f"bridge rejection stalled: endpoints ({start + 1} -> {end + 1}), "
            f"length {length:g}, {attempts} attempts, "
            f"acceptance estimate {self.acceptance:.2e}"
        )
