"""Request and response models for the HTTP service.

Expected-test values are serialized at full float precision; rendering to
the 5-decimal human format is the CLI's job.
"""

from __future__ import annotations

from enum import Enum
from typing import Literal

from pydantic import BaseModel, Field

__all__ = [
    "BoundsReport",
    "BoundsRequest",
    "ClaimModel",
    "OutcomeRequest",
    "Procedure",
    "SessionCreateRequest",
    "SessionState",
    "SimulateReport",
    "SimulateRequest",
    "TableReport",
    "TableRequest",
    "TableRow",
    "ValueReport",
    "ValueRequest",
    "VerifyReport",
    "VerifyRequest",
]


class Procedure(str, Enum):
    r1 = "r1"
    r3 = "r3"


class ValueRequest(BaseModel):
    procedure: Procedure
    q: float
    n: int = Field(ge=0)
    cap_to_nmax: bool = False
    windowed: bool = False


class ValueReport(BaseModel):
    procedure: Procedure
    q: float
    n: int
    expected_tests: float
    first_test: int
    info_bound: float
    from_cache: bool
    elapsed_ms: float


class TableRequest(BaseModel):
    procedure: Procedure
    q: float
    n_lo: int = Field(ge=0)
    n_hi: int = Field(ge=0)
    cap_to_nmax: bool = False
    windowed: bool = False


class TableRow(BaseModel):
    n: int
    expected_tests: float
    first_test: int


class TableReport(BaseModel):
    procedure: Procedure
    q: float
    rows: list[TableRow]
    from_cache: bool
    elapsed_ms: float


class BoundsRequest(BaseModel):
    q: float
    n: int = Field(ge=0)


class BoundsReport(BaseModel):
    q: float
    n: int
    individual: float
    dorfman_best: float
    dorfman_best_k: int
    info_bound: float
    n_max: int


class SimulateRequest(BaseModel):
    procedure: Procedure
    q: float
    n: int = Field(ge=0)
    trials: int = Field(ge=1)
    seed: int = Field(ge=0)
    workers: int = Field(default=1, ge=1)
    cap_to_nmax: bool = False
    windowed: bool = False


class SimulateReport(BaseModel):
    procedure: Procedure
    q: float
    n: int
    mean: float
    stderr: float
    trials: int
    seed: int
    elapsed_ms: float


class VerifyRequest(BaseModel):
    only: list[str] | None = None
    include_slow: bool = True
    q: float = 0.9999


class ClaimModel(BaseModel):
    name: str
    description: str
    computed: float | None
    expected: float | None
    delta: float | None
    tolerance: float | None
    passed: bool
    elapsed_s: float
    budget_s: float | None
    notes: str


class VerifyReport(BaseModel):
    passed: bool
    claims: list[ClaimModel]


class SessionCreateRequest(BaseModel):
    procedure: Procedure
    q: float
    n: int = Field(ge=0)
    cap_to_nmax: bool = False
    windowed: bool = False


class SessionState(BaseModel):
    session_id: str
    procedure: Procedure
    q: float
    n: int
    complete: bool
    tests_used: int
    next_group: str | None       # compressed label expression, None when complete
    next_group_size: int | None
    pool: str
    pool_size: int
    defective_set: str
    defective_set_size: int
    pending_sizes: list[int]
    classified_good: str
    classified_good_count: int
    classified_defective: str
    classified_defective_count: int


class OutcomeRequest(BaseModel):
    result: Literal["+", "-"]
