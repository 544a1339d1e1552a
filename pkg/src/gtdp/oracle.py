"""Exhaustive brute-force minimization over small nested-testing instances.

Independent ground truth for both dynamic programs. Arithmetic is exact
(:class:`fractions.Fraction` seeded with the binary value of ``q``), so
agreement with the float engines can be asserted at 1e-12.

Two layers of checking:

* ``exhaustive_min_r1`` / ``exhaustive_min_r3`` minimize over size-based
  policies — one group-size choice per reachable state. Because the value of
  a policy at a state is monotone in the values of its child states and every
  occurrence of the same state may share the same choice, the minimum over
  whole-policy assignments equals the state-by-state recursive minimum; the
  recursion here therefore *is* the enumeration, with the same state
  abstraction as the engines but none of the float arithmetic, layout, or
  scan-order machinery.

* ``labeled_min_r1`` / ``labeled_min_r3`` drop the size abstraction entirely:
  states are sets of labeled units plus the exact set of defect configurations
  consistent with the observed history, and branch probabilities come from
  summing configuration weights. Minimizing over every labeled subset choice
  verifies that tracking sizes alone loses nothing (exchangeability), rather
  than assuming it.

State and candidate counts are logged and reported so regressions in the
state-graph construction are visible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .errors import BudgetError
from .model import Prevalence

__all__ = [
    "OracleReport",
    "SIZE_BUDGET",
    "LABELED_BUDGET",
    "exhaustive_min_r1",
    "exhaustive_min_r3",
    "exhaustive_report_r1",
    "exhaustive_report_r3",
    "labeled_min_r1",
    "labeled_min_r3",
]

logger = logging.getLogger(__name__)

SIZE_BUDGET = 7     # largest n for the size-based enumeration
LABELED_BUDGET = 4  # largest n for the labeled-configuration enumeration

ONE = Fraction(1)


@dataclass(frozen=True)
class OracleReport:
    """Exact minimum plus enumeration-size counters."""

    procedure: str
    n: int
    value: Fraction
    states: int      # distinct states evaluated
    candidates: int  # (state, choice) pairs evaluated


def _check_budget(n: int, budget: int, kind: str) -> None:
    if n < 0:
        raise BudgetError(f"population size must be >= 0, got {n}")
    if n > budget:
        raise BudgetError(f"{kind} enumeration supports n <= {budget}, got {n}")


def _powers(q: Fraction, n: int) -> list[Fraction]:
    out = [ONE]
    for _ in range(n):
        out.append(out[-1] * q)
    return out


def _r3_exact(q: Fraction, n: int) -> OracleReport:
    p = _powers(q, n)
    memo_pool: dict[int, Fraction] = {0: Fraction(0)}
    memo_def: dict[int, Fraction] = {1: Fraction(0)}
    counts = [0, 0]  # states, candidates

    def pool(k: int) -> Fraction:
        if k in memo_pool:
            return memo_pool[k]
        counts[0] += 1
        best = None
        for x in range(1, k + 1):
            counts[1] += 1
            v = 1 + pool(k - x) + (1 - p[x]) * defective(x)
            if best is None or v < best:
                best = v
        memo_pool[k] = best
        return best

    def defective(m: int) -> Fraction:
        if m in memo_def:
            return memo_def[m]
        counts[0] += 1
        best = None
        for x in range(1, m):
            counts[1] += 1
            neg = p[x] * (1 - p[m - x]) / (1 - p[m])
            pos = (1 - p[x]) / (1 - p[m])
            v = 1 + neg * defective(m - x) + pos * (defective(x) + pool(m - x))
            if best is None or v < best:
                best = v
        memo_def[m] = best
        return best

    value = pool(n)
    return OracleReport("r3", n, value, counts[0], counts[1])


def _r1_exact(q: Fraction, n: int) -> OracleReport:
    p = _powers(q, n)
    memo_pool: dict[int, Fraction] = {0: Fraction(0)}
    memo_joint: dict[tuple[int, int], Fraction] = {}
    counts = [0, 0]

    def pool(k: int) -> Fraction:
        if k in memo_pool:
            return memo_pool[k]
        counts[0] += 1
        best = None
        for x in range(1, k + 1):
            counts[1] += 1
            v = 1 + p[x] * pool(k - x) + (1 - p[x]) * joint(x, k - x)
            if best is None or v < best:
                best = v
        memo_pool[k] = best
        return best

    def joint(m: int, k: int) -> Fraction:
        if m == 1:
            return pool(k)
        key = (m, k)
        if key in memo_joint:
            return memo_joint[key]
        counts[0] += 1
        best = None
        for x in range(1, m):
            counts[1] += 1
            neg = p[x] * (1 - p[m - x]) / (1 - p[m])
            pos = (1 - p[x]) / (1 - p[m])
            v = 1 + neg * joint(m - x, k) + pos * joint(x, m - x + k)
            if best is None or v < best:
                best = v
        memo_joint[key] = best
        return best

    value = pool(n)
    return OracleReport("r1", n, value, counts[0], counts[1])


def exhaustive_report_r3(prevalence: Prevalence, n: int) -> OracleReport:
    """Exact minimum expected tests over restricted nested policies."""
    _check_budget(n, SIZE_BUDGET, "size-based")
    report = _r3_exact(Fraction(prevalence.q), n)
    logger.debug(
        "oracle r3 n=%d: %d states, %d candidates, value=%s",
        n, report.states, report.candidates, float(report.value),
    )
    return report


def exhaustive_report_r1(prevalence: Prevalence, n: int) -> OracleReport:
    """Exact minimum expected tests over (size-based) nested policies."""
    _check_budget(n, SIZE_BUDGET, "size-based")
    report = _r1_exact(Fraction(prevalence.q), n)
    logger.debug(
        "oracle r1 n=%d: %d states, %d candidates, value=%s",
        n, report.states, report.candidates, float(report.value),
    )
    return report


def exhaustive_min_r3(prevalence: Prevalence, n: int) -> float:
    """Float view of :func:`exhaustive_report_r3`."""
    return float(exhaustive_report_r3(prevalence, n).value)


def exhaustive_min_r1(prevalence: Prevalence, n: int) -> float:
    """Float view of :func:`exhaustive_report_r1`."""
    return float(exhaustive_report_r1(prevalence, n).value)


# ---------------------------------------------------------------------------
# Labeled-configuration enumeration.
#
# A "world" is a frozenset of the unit labels that are defective. The state
# carries every world still consistent with the observed outcomes; posterior
# probabilities are weight sums with weight(w) = p^|w| * q^(units - |w|).
# Nothing about conditional independence or exchangeability is assumed — it
# all falls out of the world filtering.
# ---------------------------------------------------------------------------


def _world_split(worlds: frozenset, group: frozenset):
    neg = frozenset(w for w in worlds if not (w & group))
    pos = worlds - neg
    return neg, pos


def _weight(worlds: frozenset, domain_size: int, p_defect: Fraction, q: Fraction) -> Fraction:
    total = Fraction(0)
    for w in worlds:
        total += p_defect ** len(w) * q ** (domain_size - len(w))
    return total


def _subsets(units: frozenset, proper: bool):
    items = sorted(units)
    top = len(items) - 1 if proper else len(items)
    for size in range(1, top + 1):
        for combo in combinations(items, size):
            yield frozenset(combo)


def labeled_min_r1(prevalence: Prevalence, n: int) -> float:
    """Exact optimum over labeled nested policies with pool remixing.

    The defective-set remainder of a positive subtest returns to the pool;
    any nonempty subset of the pool may be tested when no defective set is
    live, and any nonempty proper subset of the defective set otherwise.
    """
    _check_budget(n, LABELED_BUDGET, "labeled")
    q = Fraction(prevalence.q)
    p_defect = 1 - q
    memo: dict[tuple, Fraction] = {}

    def value(contaminated: frozenset, unclassified: frozenset, worlds: frozenset) -> Fraction:
        while len(contaminated) == 1:
            unit = next(iter(contaminated))
            assert all(unit in w for w in worlds)
            worlds = frozenset(w - {unit} for w in worlds)
            contaminated = frozenset()
        if not contaminated and not unclassified:
            assert worlds == frozenset([frozenset()])
            return Fraction(0)
        key = (contaminated, unclassified, worlds)
        if key in memo:
            return memo[key]
        domain = len(contaminated) + len(unclassified)
        total = _weight(worlds, domain, p_defect, q)
        best = None
        groups = _subsets(contaminated, proper=True) if contaminated else _subsets(unclassified, proper=False)
        for group in groups:
            wneg, wpos = _world_split(worlds, group)
            pneg = _weight(wneg, domain, p_defect, q) / total
            if contaminated:
                v_neg = value(contaminated - group, unclassified, wneg)
                v_pos = value(group, unclassified | (contaminated - group), wpos)
            else:
                v_neg = value(frozenset(), unclassified - group, wneg)
                v_pos = value(group, unclassified - group, wpos)
            v = 1 + pneg * v_neg + (1 - pneg) * v_pos
            if best is None or v < best:
                best = v
        memo[key] = best
        return best

    units = frozenset(range(n))
    worlds = frozenset(frozenset(c) for size in range(n + 1) for c in combinations(range(n), size))
    result = value(frozenset(), units, worlds)
    logger.debug("labeled r1 n=%d: %d memoized states, value=%s", n, len(memo), float(result))
    return float(result)


def labeled_min_r3(prevalence: Prevalence, n: int) -> float:
    """Exact optimum over labeled restricted policies (no remixing).

    Positive-subtest remainders are pushed as isolated pending pools, solved
    last-in-first-out after the active pool empties; tests never mix units
    across pool boundaries.
    """
    _check_budget(n, LABELED_BUDGET, "labeled")
    q = Fraction(prevalence.q)
    p_defect = 1 - q
    memo: dict[tuple, Fraction] = {}

    def value(contaminated: frozenset, active: frozenset, pending: tuple, worlds: frozenset) -> Fraction:
        while True:
            if len(contaminated) == 1:
                unit = next(iter(contaminated))
                assert all(unit in w for w in worlds)
                worlds = frozenset(w - {unit} for w in worlds)
                contaminated = frozenset()
                continue
            if not contaminated and not active and pending:
                active = pending[-1]
                pending = pending[:-1]
                continue
            break
        if not contaminated and not active:
            assert worlds == frozenset([frozenset()])
            return Fraction(0)
        key = (contaminated, active, pending, worlds)
        if key in memo:
            return memo[key]
        domain = len(contaminated) + len(active) + sum(len(g) for g in pending)
        total = _weight(worlds, domain, p_defect, q)
        best = None
        groups = _subsets(contaminated, proper=True) if contaminated else _subsets(active, proper=False)
        for group in groups:
            wneg, wpos = _world_split(worlds, group)
            pneg = _weight(wneg, domain, p_defect, q) / total
            if contaminated:
                remainder = contaminated - group
                v_neg = value(remainder, active, pending, wneg)
                v_pos = value(group, active, pending + ((remainder,) if remainder else ()), wpos)
            else:
                v_neg = value(frozenset(), active - group, pending, wneg)
                v_pos = value(group, active - group, pending, wpos)
            v = 1 + pneg * v_neg + (1 - pneg) * v_pos
            if best is None or v < best:
                best = v
        memo[key] = best
        return best

    units = frozenset(range(n))
    worlds = frozenset(frozenset(c) for size in range(n + 1) for c in combinations(range(n), size))
    result = value(frozenset(), units, (), worlds)
    logger.debug("labeled r3 n=%d: %d memoized states, value=%s", n, len(memo), float(result))
    return float(result)
