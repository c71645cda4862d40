"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: StoreError -> 1 (I/O),
ValidationFailure -> 2, NumericalFailure -> 3.
"""


class CryoboError(Exception):
    """Base class for all package errors."""


class ValidationFailure(CryoboError):
    """Invalid input: bad configuration, malformed data, contract violation."""


class StoreError(CryoboError):
    """Campaign store I/O problem: missing files, lock contention, bad paths."""


class NumericalFailure(CryoboError):
    """Numerical breakdown: non-PSD kernels after jitter escalation, etc."""


class StaleStateError(CryoboError):
    """Optimistic-concurrency conflict: the state version token is stale."""
