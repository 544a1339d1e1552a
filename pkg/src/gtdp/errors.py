"""Exception hierarchy shared across the package.

Two broad families matter to callers: domain-style errors (bad arguments,
out-of-range lookups, protocol misuse) and resource-style errors (memory or
enumeration budgets, persistence failures). The CLI maps the first family to
exit code 2 and the second to exit code 3.
"""


class GroupTestingError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GroupTestingError, ValueError):
    """An argument lies outside its mathematical domain."""


class CapacityError(GroupTestingError, ValueError):
    """A requested exponent exceeds the power kernel's capacity."""


class StateRangeError(GroupTestingError, LookupError):
    """A state lies outside the range a value table was built for."""


class BudgetError(GroupTestingError, RuntimeError):
    """An exhaustive enumeration would exceed its documented size budget."""


class ResourceBudgetError(GroupTestingError, RuntimeError):
    """A table build would exceed its configured memory budget."""


class ProtocolError(GroupTestingError, RuntimeError):
    """An outcome was applied to a group the executor did not just emit."""


class ClassificationError(GroupTestingError, RuntimeError):
    """A simulated trial finished with classifications that contradict the
    known truth vector. This always indicates a bug in policy execution."""


class StoreError(GroupTestingError):
    """Base class for table persistence failures."""


class StoreFormatError(StoreError):
    """A table file is truncated, malformed, or corrupt.

    The message names the first field that failed validation.
    """


class StoreMismatchError(StoreError):
    """A table file is well formed but does not match the request
    (wrong procedure tag or wrong prevalence bit pattern)."""
