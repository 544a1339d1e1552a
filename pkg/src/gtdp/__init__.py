"""Group-testing dynamic programming: design and verification of nested procedures."""

from .baselines import (
    BoundReport,
    binary_entropy,
    bound_report,
    dorfman_best,
    dorfman_cost,
    info_bound,
    n_max,
)
from .engine_r1 import R1Table, build_r1, value_r1
from .engine_r3 import R3Table, build_r3, first_test_size_r3, split_cost_r3
from .errors import (
    BudgetError,
    CapacityError,
    ClassificationError,
    DomainError,
    GroupTestingError,
    ProtocolError,
    ResourceBudgetError,
    StateRangeError,
    StoreError,
    StoreFormatError,
    StoreMismatchError,
)
from .model import (
    BinomialState,
    DefectiveState,
    GroupChoice,
    PowerKernel,
    Prevalence,
    allowed_group_sizes,
    cached_kernel,
    make_prevalence,
)
from .oracle import exhaustive_min_r1, exhaustive_min_r3
from .simulator import ExecutionState, SimEstimate, apply_outcome, next_group, simulate
from .store import TableProvider, load_table, save_table
from .verification import ClaimResult, run_claims

__version__ = "0.1.0"

__all__ = [
    "BinomialState",
    "BoundReport",
    "BudgetError",
    "CapacityError",
    "ClaimResult",
    "ClassificationError",
    "DefectiveState",
    "DomainError",
    "ExecutionState",
    "GroupChoice",
    "GroupTestingError",
    "PowerKernel",
    "Prevalence",
    "ProtocolError",
    "R1Table",
    "R3Table",
    "ResourceBudgetError",
    "SimEstimate",
    "StateRangeError",
    "StoreError",
    "StoreFormatError",
    "StoreMismatchError",
    "TableProvider",
    "allowed_group_sizes",
    "apply_outcome",
    "binary_entropy",
    "bound_report",
    "build_r1",
    "build_r3",
    "cached_kernel",
    "dorfman_best",
    "dorfman_cost",
    "exhaustive_min_r1",
    "exhaustive_min_r3",
    "first_test_size_r3",
    "info_bound",
    "load_table",
    "make_prevalence",
    "n_max",
    "next_group",
    "run_claims",
    "save_table",
    "simulate",
    "split_cost_r3",
    "value_r1",
    "__version__",
]
