"""Core domain types and the numerically stable probability kernel.

Group testing classifies every unit of a population as good or defective
using tests on pooled subsets; a test is positive iff the subset contains at
least one defective. Two situation types drive everything here:

* a *binomial state*: ``n`` unclassified units, each independently good with
  probability ``q``;
* a *defective state*: a set of ``m`` units known (from a positive test and
  subsequent negatives) to contain at least one defective, alongside a
  binomial pool of ``n`` units.

All values are immutable after construction: the kernel's arrays are marked
read-only and the state types are frozen dataclasses, so everything in this
module can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import CapacityError, DomainError

__all__ = [
    "Prevalence",
    "make_prevalence",
    "PowerKernel",
    "cached_kernel",
    "BinomialState",
    "DefectiveState",
    "GroupChoice",
    "allowed_group_sizes",
]


@dataclass(frozen=True, slots=True)
class Prevalence:
    """Per-unit probability ``q`` of being good, with ``ln q`` cached.

    ``q`` must lie strictly inside (0, 1): a population that is certainly all
    good or certainly all bad has no testing problem.
    """

    q: float
    ln_q: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        q = self.q
        if isinstance(q, bool) or not isinstance(q, (int, float)):
            raise DomainError(f"prevalence q must be a real number, got {q!r}")
        q = float(q)
        if not math.isfinite(q):
            raise DomainError(f"prevalence q must be finite, got {q!r}")
        if not 0.0 < q < 1.0:
            raise DomainError(f"prevalence q must satisfy 0 < q < 1 strictly, got {q!r}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "ln_q", math.log(q))

    @property
    def p(self) -> float:
        """Probability that a unit is defective."""
        return 1.0 - self.q

    @property
    def q_bits(self) -> int:
        """The IEEE-754 bit pattern of q, used for exact cache identity."""
        return int.from_bytes(np.float64(self.q).tobytes(), "little")


def make_prevalence(q: float) -> Prevalence:
    """Validate ``q`` and return a :class:`Prevalence` with ``ln q`` cached."""
    return Prevalence(q)


class PowerKernel:
    """Tabulated powers of q: ``pow_q(k) = q**k`` and ``one_minus_pow_q(k) = 1 - q**k``.

    ``q**k`` is evaluated as ``exp(k * ln q)`` from the cached log, never by
    repeated multiplication, so large exponents keep full relative accuracy.
    ``1 - q**k`` goes through ``expm1`` because the direct subtraction is
    catastrophically cancellative when ``q**k`` is close to 1 (small ``k`` at
    ``q`` near 1), exactly the regime pooled screening lives in.

    The two branch probabilities of a subtest on ``x`` units taken from a
    defective set of ``m`` units are exposed in factored, stable form:

    * negative: ``(q^x - q^m) / (1 - q^m)``  computed as ``q^x * (1 - q^{m-x}) / (1 - q^m)``
    * positive: ``(1 - q^x) / (1 - q^m)``
    """

    __slots__ = ("prevalence", "capacity", "_pow", "_one_minus")

    def __init__(self, prevalence: Prevalence, capacity: int) -> None:
        capacity = int(capacity)
        if capacity < 0:
            raise DomainError(f"kernel capacity must be >= 0, got {capacity}")
        exponents = np.arange(capacity + 1, dtype=np.float64) * prevalence.ln_q
        pow_q = np.exp(exponents)
        one_minus = -np.expm1(exponents)
        pow_q[0] = 1.0
        one_minus[0] = 0.0
        pow_q.setflags(write=False)
        one_minus.setflags(write=False)
        self.prevalence = prevalence
        self.capacity = capacity
        self._pow = pow_q
        self._one_minus = one_minus

    def _check_exponent(self, k: int) -> None:
        if k < 0:
            raise DomainError(f"exponent must be >= 0, got {k}")
        if k > self.capacity:
            raise CapacityError(f"exponent {k} exceeds kernel capacity {self.capacity}")

    def pow_q(self, k: int) -> float:
        """q**k."""
        self._check_exponent(k)
        return float(self._pow[k])

    def one_minus_pow_q(self, k: int) -> float:
        """1 - q**k, accurate even when q**k is within 1e-10 of 1."""
        self._check_exponent(k)
        return float(self._one_minus[k])

    def _check_subtest(self, m: int, x: int) -> None:
        if m < 2:
            raise DomainError(f"a defective set needs m >= 2 to subtest, got m={m}")
        if not 1 <= x <= m - 1:
            raise DomainError(f"subtest size must satisfy 1 <= x <= m-1, got x={x} for m={m}")
        self._check_exponent(m)

    def neg_branch_prob(self, m: int, x: int) -> float:
        """P(subtest of x units from a defective set of m is negative)."""
        self._check_subtest(m, x)
        return float(self._pow[x] * self._one_minus[m - x] / self._one_minus[m])

    def pos_branch_prob(self, m: int, x: int) -> float:
        """P(subtest of x units from a defective set of m is positive)."""
        self._check_subtest(m, x)
        return float(self._one_minus[x] / self._one_minus[m])

    @property
    def pow_array(self) -> np.ndarray:
        """Read-only array of q**k for k = 0..capacity."""
        return self._pow

    @property
    def one_minus_array(self) -> np.ndarray:
        """Read-only array of 1 - q**k for k = 0..capacity."""
        return self._one_minus


@lru_cache(maxsize=6)
def cached_kernel(prevalence: Prevalence, capacity: int) -> PowerKernel:
    """Shared kernel instances; safe because kernels are immutable and pure
    functions of (q, capacity)."""
    return PowerKernel(prevalence, capacity)


@dataclass(frozen=True, slots=True)
class BinomialState:
    """``n`` unclassified units, each independently good with probability q."""

    n: int

    def __post_init__(self) -> None:
        if self.n < 0:
            raise DomainError(f"binomial state needs n >= 0, got {self.n}")


@dataclass(frozen=True, slots=True)
class DefectiveState:
    """A set of ``m`` units known to contain at least one defective, plus a
    binomial pool of ``n`` units."""

    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 1:
            raise DomainError(f"defective state needs m >= 1, got {self.m}")
        if self.n < 0:
            raise DomainError(f"defective state needs n >= 0, got {self.n}")


@dataclass(frozen=True, slots=True)
class GroupChoice:
    """Number of units to include in the next test."""

    x: int

    def __post_init__(self) -> None:
        if self.x < 1:
            raise DomainError(f"a test group needs x >= 1 units, got {self.x}")


def allowed_group_sizes(state: BinomialState | DefectiveState) -> range:
    """Legal group sizes for the next test in ``state``.

    From a binomial state any 1..n units may be pooled. From a defective set
    of m >= 2 only a proper subset (1..m-1) is informative: testing all m
    units is guaranteed positive. A singleton defective set allows no test at
    all; the unit is already identified.
    """
    if isinstance(state, BinomialState):
        return range(1, state.n + 1)
    if state.m == 1:
        return range(1, 1)
    return range(1, state.m)
