"""Policy execution: step-at-a-time advisor state and Monte Carlo estimation.

Two executors share one policy definition (the choice tables plus
lowest-label-first unit selection and last-in-first-out pending pools):

* :class:`ExecutionState` with :func:`next_group` / :func:`apply_outcome` —
  the general label-set state machine used by the interactive session
  advisor, probe-mode runs, and tracing.

* A range-based trial loop used by :func:`simulate` for Monte Carlo. Because
  groups are always the lowest-labeled prefix of their source set, every
  component of the state (pool, defective set, each pending pool) stays a
  contiguous label range, so a trial reduces to integer endpoint arithmetic
  plus bisection into the trial's sorted defect positions.

Every simulated trial asserts that the classified defective set equals the
true one exactly; any mismatch raises :class:`ClassificationError` rather
than polluting the estimate. Trial populations come from counter-based
streams keyed by ``(seed, trial)``, so estimates are bitwise reproducible
for a given seed regardless of worker count or execution order.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine_r1 import R1Table
from .engine_r3 import R3Table
from .errors import ClassificationError, DomainError, ProtocolError, StateRangeError
from .model import Prevalence

__all__ = [
    "ExecutionState",
    "PolicyExecutor",
    "SimEstimate",
    "apply_outcome",
    "fresh_state",
    "next_group",
    "policy_trace",
    "simulate",
]

_EMPTY = np.empty(0, dtype=np.int64)


@dataclass
class SimEstimate:
    """Monte Carlo estimate of the expected number of tests."""

    mean: float
    stderr: float
    trials: int
    seed: int


@dataclass
class ExecutionState:
    """Label partition of a population mid-procedure.

    Invariant: every unit label lies in exactly one of ``pool``,
    ``defective_set``, the pool of a ``pending`` entry, ``classified_good``,
    or ``classified_defective``. Label arrays are sorted ascending.
    ``pending`` is a last-in-first-out stack of isolated sub-populations
    (restricted procedure only), each itself an ExecutionState that only
    ever carries a pool.
    """

    pool: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    defective_set: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    pending: list["ExecutionState"] = field(default_factory=list)
    classified_good: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    classified_defective: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    tests_used: int = 0

    @property
    def complete(self) -> bool:
        return (
            len(self.pool) == 0
            and len(self.defective_set) == 0
            and not self.pending
        )

    @property
    def unresolved(self) -> int:
        return (
            len(self.pool)
            + len(self.defective_set)
            + sum(len(sub.pool) for sub in self.pending)
        )

    def all_labels(self) -> np.ndarray:
        parts = [self.pool, self.defective_set, self.classified_good, self.classified_defective]
        parts.extend(sub.pool for sub in self.pending)
        return np.sort(np.concatenate(parts))

    def assert_partition(self, n: int) -> None:
        labels = self.all_labels()
        if len(labels) != n or not np.array_equal(labels, np.arange(n, dtype=np.int64)):
            raise ProtocolError(f"label partition violated: {len(labels)} labels for population {n}")


def fresh_state(n: int) -> ExecutionState:
    """Start state for a population of ``n`` unclassified units labeled 0..n-1."""
    if n < 0:
        raise DomainError(f"population size must be >= 0, got {n}")
    return ExecutionState(pool=np.arange(n, dtype=np.int64))


def _normalize(state: ExecutionState) -> None:
    """Apply the zero-cost transitions: collapse singleton defective sets and
    activate the most recent pending pool once pool and defective set empty."""
    while True:
        if len(state.defective_set) == 1:
            state.classified_defective = np.sort(
                np.concatenate([state.classified_defective, state.defective_set])
            )
            state.defective_set = _EMPTY.copy()
            continue
        if len(state.defective_set) == 0 and len(state.pool) == 0 and state.pending:
            state.pool = state.pending.pop().pool
            continue
        break


def next_group(state: ExecutionState, table: R1Table | R3Table) -> np.ndarray | None:
    """The labels to test next, or None when classification is complete.

    Zero-cost normalizations (a singleton defective set is classified without
    a test; an exhausted pool activates the most recent pending pool) are
    applied to ``state`` before the choice is read from the table.
    """
    _normalize(state)
    if state.complete:
        return None
    m = len(state.defective_set)
    if m >= 2:
        if isinstance(table, R1Table):
            x = table.joint_test_size(m, len(state.pool))
        else:
            x = table.defective_test_size(m)
        return state.defective_set[:x].copy()
    x = table.first_test_size(len(state.pool))
    return state.pool[:x].copy()


def apply_outcome(
    state: ExecutionState,
    group: np.ndarray,
    positive: bool,
    procedure: str,
) -> ExecutionState:
    """Advance ``state`` by one observed test outcome.

    ``group`` must be exactly the group a current :func:`next_group` call
    would emit (the lowest-labeled prefix of the defective set or pool);
    anything else is a stale or mismatched group and raises
    :class:`ProtocolError`. Returns ``state`` for chaining.
    """
    if procedure not in ("r1", "r3"):
        raise DomainError(f"procedure must be 'r1' or 'r3', got {procedure!r}")
    group = np.asarray(group, dtype=np.int64)
    k = len(group)
    if k == 0:
        raise ProtocolError("empty group")
    m = len(state.defective_set)
    from_defective = m >= 2 and k <= m - 1 and np.array_equal(group, state.defective_set[:k])
    from_pool = not from_defective and k <= len(state.pool) and np.array_equal(group, state.pool[:k])
    if from_defective:
        rest = state.defective_set[k:]
        if positive:
            state.defective_set = state.defective_set[:k]
            if procedure == "r1":
                state.pool = np.sort(np.concatenate([state.pool, rest]))
            elif len(rest):
                state.pending.append(ExecutionState(pool=rest))
        else:
            state.classified_good = np.sort(np.concatenate([state.classified_good, group]))
            state.defective_set = rest
    elif from_pool:
        if m != 0:
            raise ProtocolError("pool group offered while a defective set is live")
        rest = state.pool[k:]
        if positive:
            state.defective_set = state.pool[:k]
            state.pool = rest
        else:
            state.classified_good = np.sort(np.concatenate([state.classified_good, group]))
            state.pool = rest
    else:
        raise ProtocolError("stale or mismatched group for this state")
    state.tests_used += 1
    return state


class PolicyExecutor:
    """Runs a table's policy against a known truth vector, step by step.

    ``truth`` is a boolean array, True where the unit is defective. The
    executed steps accumulate in ``trace`` as (labels, positive) pairs.
    """

    def __init__(
        self,
        table: R1Table | R3Table,
        truth: np.ndarray,
        check_invariants: bool = False,
    ):
        self.table = table
        self.truth = np.asarray(truth, dtype=bool)
        self.procedure = "r1" if isinstance(table, R1Table) else "r3"
        self.check_invariants = check_invariants
        self.n = len(self.truth)
        if self.n > table.n_top:
            raise StateRangeError(f"population {self.n} exceeds table n_top {table.n_top}")
        self.state = fresh_state(self.n)
        self.trace: list[tuple[np.ndarray, bool]] = []

    def step(self) -> tuple[np.ndarray, bool] | None:
        group = next_group(self.state, self.table)
        if group is None:
            return None
        positive = bool(self.truth[group].any())
        apply_outcome(self.state, group, positive, self.procedure)
        if self.check_invariants:
            self.state.assert_partition(self.n)
        self.trace.append((group, positive))
        return group, positive

    def run(self) -> int:
        while self.step() is not None:
            pass
        self._verify_classification()
        return self.state.tests_used

    def _verify_classification(self) -> None:
        true_defective = np.flatnonzero(self.truth)
        if not np.array_equal(self.state.classified_defective, true_defective):
            raise ClassificationError(
                f"classified defectives {self.state.classified_defective.tolist()} "
                f"!= true defectives {true_defective.tolist()}"
            )
        if len(self.state.classified_good) != self.n - len(true_defective):
            raise ClassificationError("classified-good count does not match truth")


def policy_trace(
    table: R1Table | R3Table, truth: np.ndarray, check_invariants: bool = True
) -> list[tuple[np.ndarray, bool]]:
    """Full (group, outcome) sequence for a known truth vector."""
    executor = PolicyExecutor(table, truth, check_invariants=check_invariants)
    executor.run()
    return executor.trace


# ---------------------------------------------------------------------------
# Range-based fast trial loop for Monte Carlo.
# ---------------------------------------------------------------------------


def _run_trial_r3(choice_e, choice_d, defects: list, n: int) -> tuple[int, list]:
    tests = 0
    found: list[int] = []
    pend: list[tuple[int, int]] = []
    dlo = dhi = 0
    plo, phi = 0, n
    while True:
        m = dhi - dlo
        if m == 1:
            found.append(dlo)
            dlo = dhi
            continue
        if m >= 2:
            x = int(choice_d[m])
            tests += 1
            if bisect_left(defects, dlo + x) > bisect_left(defects, dlo):
                if dlo + x < dhi:
                    pend.append((dlo + x, dhi))
                dhi = dlo + x
            else:
                dlo += x
            continue
        if plo < phi:
            x = int(choice_e[phi - plo])
            tests += 1
            if bisect_left(defects, plo + x) > bisect_left(defects, plo):
                dlo, dhi = plo, plo + x
            plo += x
            continue
        if pend:
            plo, phi = pend.pop()
            continue
        return tests, found


def _run_trial_r1(choice_h, joint_choice, row_offsets, defects: list, n: int) -> tuple[int, list]:
    tests = 0
    found: list[int] = []
    dlo = dhi = 0
    plo, phi = 0, n
    while True:
        m = dhi - dlo
        if m == 1:
            found.append(dlo)
            dlo = dhi
            continue
        if m >= 2:
            x = int(joint_choice[row_offsets[phi - plo] + m - 1])
            tests += 1
            if bisect_left(defects, dlo + x) > bisect_left(defects, dlo):
                dhi = dlo + x
                plo = dhi  # untested remainder rejoins the pool
            else:
                dlo += x
            continue
        if plo < phi:
            x = int(choice_h[phi - plo])
            tests += 1
            if bisect_left(defects, plo + x) > bisect_left(defects, plo):
                dlo, dhi = plo, plo + x
            plo += x
            continue
        return tests, found


def _trial_runner(table: R1Table | R3Table):
    if isinstance(table, R1Table):
        choice_h = table.pool_choice
        joint_choice = table.joint_choice
        offsets = table.row_offsets

        def run(defects: list, n: int) -> tuple[int, list]:
            return _run_trial_r1(choice_h, joint_choice, offsets, defects, n)
    else:
        choice_e = table.pool_choice
        choice_d = table.defective_choice

        def run(defects: list, n: int) -> tuple[int, list]:
            return _run_trial_r3(choice_e, choice_d, defects, n)

    return run


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, trial], dtype=np.uint64)))


def simulate(
    table: R1Table | R3Table,
    n: int,
    trials: int,
    seed: int,
    workers: int = 1,
    probe_truth: np.ndarray | None = None,
    check_invariants: bool = False,
) -> SimEstimate:
    """Monte Carlo estimate of the expected tests to classify ``n`` units.

    Trial ``t`` draws its population from a Philox stream keyed by
    ``(seed, t)``: unit ``i`` is good iff the i-th uniform draw is below q.
    Each trial's classification is checked against its truth exactly. With
    ``probe_truth`` given, runs that single fixed population once through
    the step executor instead (trials is ignored; stderr is 0).
    """
    if probe_truth is not None:
        executor = PolicyExecutor(table, probe_truth, check_invariants=True)
        tests = executor.run()
        return SimEstimate(mean=float(tests), stderr=0.0, trials=1, seed=seed)
    if n < 0 or n > table.n_top:
        raise StateRangeError(f"population {n} outside table range 0..{table.n_top}")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if workers < 1:
        raise DomainError(f"workers must be >= 1, got {workers}")
    q = table.prevalence.q
    run = _trial_runner(table)
    counts = np.empty(trials, dtype=np.float64)

    def fill(lo: int, hi: int) -> None:
        for t in range(lo, hi):
            rng = _trial_rng(seed, t)
            defect_positions = np.flatnonzero(rng.random(n) >= q).tolist()
            tests, found = run(defect_positions, n)
            if sorted(found) != defect_positions:
                raise ClassificationError(
                    f"trial {t}: classified defectives {sorted(found)} != true {defect_positions}"
                )
            if check_invariants:
                truth = np.zeros(n, dtype=bool)
                truth[defect_positions] = True
                if PolicyExecutor(table, truth, check_invariants=True).run() != tests:
                    raise ClassificationError(f"trial {t}: executor disagrees with fast path")
            counts[t] = tests

    if workers == 1:
        fill(0, trials)
    else:
        step = math.ceil(trials / workers)
        spans = [(lo, min(lo + step, trials)) for lo in range(0, trials, step)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(fill, lo, hi) for lo, hi in spans]:
                future.result()

    mean = float(np.mean(counts))
    stderr = float(np.std(counts, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return SimEstimate(mean=mean, stderr=stderr, trials=trials, seed=seed)
