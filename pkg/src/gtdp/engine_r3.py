"""Dynamic program for the restricted nested procedure (``r3``).

The restricted procedure assembles the best design for a pool of ``t`` units
out of the finished designs for pools 1..t-1: units are never remixed across
group boundaries. Two value arrays describe it completely:

* ``pool_expected[n]``  - expected tests to classify an isolated binomial
  pool of ``n`` units;
* ``defective_expected[m]`` - expected tests to finish a set of ``m`` units
  known to contain at least one defective, resolved in isolation.

with the mutually recursive minimizations (ties break toward the smallest
group; ``P[k] = q^k``, ``W[k] = 1 - q^k``)::

    defective_expected[m] = 1 + min_{1<=x<=m-1} [ neg(m,x) * defective_expected[m-x]
                                + pos(m,x) * (defective_expected[x] + pool_expected[m-x]) ]
    pool_expected[n]      = 1 + min_{1<=x<=X(n)} [ pool_expected[n-x] + W[x] * defective_expected[x] ]

The positive branch of the defective recursion is where the restriction
lives: the ``m-x`` untested units drop out as an isolated binomial
subproblem (the ``pool_expected[m-x]`` term) instead of rejoining whatever
pool surrounds them. ``X(n)`` is ``n``, or ``min(n, n_max)`` when the search
is capped to the maximal useful group size.

Testing all ``m`` units of a defective set is informationless (the outcome
is positive with certainty), so ``x = m`` is structurally excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import baselines
from .errors import CapacityError, DomainError, StateRangeError
from .model import PowerKernel, Prevalence, cached_kernel

__all__ = ["R3Table", "build_r3", "first_test_size_r3", "split_cost_r3"]


@dataclass(frozen=True)
class R3Table:
    """Finished value and choice arrays for the restricted nested procedure.

    Arrays are indexed by pool size ``n`` (``pool_*``) or defective-set size
    ``m`` (``defective_*``) and are read-only; a table can be shared across
    threads without further locking.
    """

    prevalence: Prevalence
    n_top: int
    cap_to_nmax: bool
    pool_expected: np.ndarray      # float64, length n_top + 1
    defective_expected: np.ndarray  # float64, length n_top + 1
    pool_choice: np.ndarray        # uint32, length n_top + 1
    defective_choice: np.ndarray   # uint32, length n_top + 1

    def _check_pool(self, n: int) -> None:
        if not 0 <= n <= self.n_top:
            raise StateRangeError(f"pool size {n} outside table range 0..{self.n_top}")

    def _check_defective(self, m: int) -> None:
        if not 1 <= m <= self.n_top:
            raise StateRangeError(f"defective-set size {m} outside table range 1..{self.n_top}")

    def expected_tests(self, n: int) -> float:
        """Expected tests to classify a binomial pool of ``n`` units."""
        self._check_pool(n)
        return float(self.pool_expected[n])

    def defective_tests(self, m: int) -> float:
        """Expected tests to finish an isolated defective set of ``m`` units."""
        self._check_defective(m)
        return float(self.defective_expected[m])

    def first_test_size(self, n: int) -> int:
        """Group size tested first in a binomial pool of ``n`` units."""
        self._check_pool(n)
        return int(self.pool_choice[n])

    def defective_test_size(self, m: int) -> int:
        """Subtest size chosen in a defective set of ``m`` units (m >= 2)."""
        self._check_defective(m)
        return int(self.defective_choice[m])

    def split_cost(self, parts: list[int]) -> float:
        """Total expected tests when the population is pre-split into
        independently tested subpopulations of the given sizes."""
        parts = list(parts)
        if not parts:
            raise DomainError("split_cost needs at least one part")
        total = 0.0
        for part in parts:
            self._check_pool(part)
            total += float(self.pool_expected[part])
        return total

    def recompute_pool_value(self, n: int) -> float:
        """Re-evaluate the pool recursion at the stored choice.

        Reproduces the builder's arithmetic operation for operation, so the
        result must equal ``pool_expected[n]`` bitwise for every n >= 1.
        """
        self._check_pool(n)
        if n == 0:
            return 0.0
        kernel = _kernel_for(self.prevalence, self.n_top)
        w = kernel.one_minus_array
        x = int(self.pool_choice[n])
        return 1.0 + float(self.pool_expected[n - x]) + float(w[x] * self.defective_expected[x])

    def recompute_defective_value(self, m: int) -> float:
        """Re-evaluate the defective recursion at the stored choice,
        bitwise-identically to the builder."""
        self._check_defective(m)
        if m == 1:
            return 0.0
        kernel = _kernel_for(self.prevalence, self.n_top)
        p = kernel.pow_array
        w = kernel.one_minus_array
        x = int(self.defective_choice[m])
        d = self.defective_expected
        e = self.pool_expected
        t = p[x] * w[m - x] * d[m - x] + w[x] * (d[x] + e[m - x])
        return 1.0 + float(t / w[m])


def _kernel_for(prevalence: Prevalence, n_top: int) -> PowerKernel:
    return cached_kernel(prevalence, max(n_top, baselines.n_max(prevalence)))


def build_r3(
    prevalence: Prevalence,
    n_top: int,
    cap_to_nmax: bool = False,
    kernel: PowerKernel | None = None,
) -> R3Table:
    """Fill the restricted-procedure tables for every pool size 0..n_top.

    ``cap_to_nmax`` restricts the first-test search to ``min(n, n_max)``; the
    default searches the full range so correctness never depends on the cap.
    A caller-supplied kernel is reused as-is and must cover ``n_top``.
    """
    if n_top < 0:
        raise DomainError(f"n_top must be >= 0, got {n_top}")
    if kernel is None:
        kernel = _kernel_for(prevalence, n_top)
    elif kernel.capacity < n_top:
        raise CapacityError(f"n_top {n_top} exceeds kernel capacity {kernel.capacity}")

    pow_q = kernel.pow_array
    one_minus = kernel.one_minus_array
    x_cap = baselines.n_max(prevalence) if cap_to_nmax else n_top

    e = np.zeros(n_top + 1)
    d = np.zeros(n_top + 1)
    choice_e = np.zeros(n_top + 1, dtype=np.uint32)
    choice_d = np.zeros(n_top + 1, dtype=np.uint32)
    # weighted[x] = W[x] * defective_expected[x], the per-candidate cost of a
    # positive first test; filled as d grows.
    weighted = np.zeros(n_top + 1)

    for k in range(1, n_top + 1):
        if k >= 2:
            numerator = (
                pow_q[1:k] * one_minus[k - 1:0:-1] * d[k - 1:0:-1]
                + one_minus[1:k] * (d[1:k] + e[k - 1:0:-1])
            )
            i = int(np.argmin(numerator))
            choice_d[k] = i + 1
            d[k] = 1.0 + numerator[i] / one_minus[k]
        weighted[k] = one_minus[k] * d[k]

        hi = min(k, x_cap)
        candidates = 1.0 + e[k - hi:k][::-1] + weighted[1:hi + 1]
        i = int(np.argmin(candidates))
        choice_e[k] = i + 1
        e[k] = candidates[i]

    for arr in (e, d, choice_e, choice_d):
        arr.setflags(write=False)
    return R3Table(
        prevalence=prevalence,
        n_top=n_top,
        cap_to_nmax=cap_to_nmax,
        pool_expected=e,
        defective_expected=d,
        pool_choice=choice_e,
        defective_choice=choice_d,
    )


def first_test_size_r3(table: R3Table, n: int) -> int:
    """Group size the restricted procedure tests first for a pool of ``n``."""
    return table.first_test_size(n)


def split_cost_r3(table: R3Table, parts: list[int]) -> float:
    """Expected tests when the population is split into independent parts."""
    return table.split_cost(parts)
