"""Closed-form reference quantities for pooled screening.

None of these run a dynamic program; they bound or benchmark one:

* ``n_max`` - the largest group size that can ever be worth testing first,
  ``ceil(ln(1-q) / ln q)``;
* individual testing, which always costs exactly ``n`` tests;
* the classical two-stage pooling baseline (test groups of ``k``, retest
  members of positive groups individually);
* the binary-entropy information bound, a floor on the expected number of
  binary-outcome tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import Prevalence

__all__ = [
    "n_max",
    "dorfman_cost",
    "dorfman_best",
    "binary_entropy",
    "info_bound",
    "BoundReport",
    "bound_report",
]

# Width of the near-integer guard in n_max. When ln(1-q)/ln(q) lands on an
# exact integer (q = 0.5 gives exactly 1), platform rounding must not push
# the ceiling up to the next integer.
_INTEGER_GUARD = 1e-9


def n_max(prevalence: Prevalence) -> int:
    """Largest group size that can ever be a useful first test."""
    ratio = math.log1p(-prevalence.q) / prevalence.ln_q
    nearest = round(ratio)
    if abs(ratio - nearest) < _INTEGER_GUARD:
        return int(nearest)
    return int(math.ceil(ratio))


def dorfman_cost(prevalence: Prevalence, n: int, k: int) -> float:
    """Expected tests for two-stage pooling with group size ``k``.

    ``(n/k) * (1 + k * (1 - q^k))``: one test per group plus individual
    retests of every member of a positive group. ``n`` is treated as
    divisible by ``k`` in expectation, so fractional groups are allowed.
    """
    if k < 2:
        raise DomainError(f"two-stage pooling needs k >= 2 (retesting a singleton group is dominated), got k={k}")
    if k > n:
        raise DomainError(f"group size k={k} exceeds population size n={n}")
    positive_prob = -math.expm1(k * prevalence.ln_q)
    return (n / k) * (1.0 + k * positive_prob)


def dorfman_best(prevalence: Prevalence, n: int) -> tuple[float, int]:
    """Best two-stage pooling cost over all group sizes 2..n.

    Returns ``(cost, k)``; ties prefer the smaller k.
    """
    if n < 2:
        raise DomainError(f"two-stage pooling needs n >= 2, got n={n}")
    ks = np.arange(2, n + 1, dtype=np.float64)
    costs = (n / ks) * (1.0 - np.expm1(ks * prevalence.ln_q) * ks)
    i = int(np.argmin(costs))
    return float(costs[i]), int(ks[i])


def binary_entropy(p: float) -> float:
    """Entropy in bits of a Bernoulli(p) outcome."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"entropy argument must lie in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def info_bound(prevalence: Prevalence, n: int) -> float:
    """Information-theoretic floor on expected tests for a pool of ``n``.

    Each test yields at most one bit; classifying n iid units requires
    n * h(p) bits in expectation, with p the defect probability.
    """
    if n < 0:
        raise DomainError(f"population size must be >= 0, got {n}")
    if n == 0:
        return 0.0
    return n * binary_entropy(prevalence.p)


@dataclass(frozen=True, slots=True)
class BoundReport:
    """Reference costs bundled for comparison against the DP procedures."""

    n: int
    q: float
    individual: float
    dorfman_best: float
    dorfman_best_k: int
    info_bound: float
    n_max: int


def bound_report(prevalence: Prevalence, n: int) -> BoundReport:
    """Assemble every closed-form reference quantity for one instance.

    For n < 2 no two-stage pooling exists, so its slot degrades to
    individual testing with k = 1.
    """
    if n < 0:
        raise DomainError(f"population size must be >= 0, got {n}")
    if n >= 2:
        best_cost, best_k = dorfman_best(prevalence, n)
    else:
        best_cost, best_k = float(n), 1
    return BoundReport(
        n=n,
        q=prevalence.q,
        individual=float(n),
        dorfman_best=best_cost,
        dorfman_best_k=best_k,
        info_bound=info_bound(prevalence, n),
        n_max=n_max(prevalence),
    )
