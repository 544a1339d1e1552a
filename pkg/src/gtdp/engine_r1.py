"""Dynamic program for the optimal nested procedure (``r1``).

The optimal nested procedure differs from the restricted one in a single
transition: after a positive subtest on ``x`` of ``m`` suspect units, the
``m - x`` untested units rejoin the surrounding binomial pool instead of
being resolved in isolation. That remixing forces a two-dimensional state
space. With ``P[k] = q^k`` and ``W[k] = 1 - q^k``::

    joint(1, n) = pool(n)                       # a lone suspect is identified free
    joint(m, n) = 1 + min_{1<=x<=m-1} [ neg(m,x) * joint(m-x, n)
                                      + pos(m,x) * joint(x, m-x+n) ]   for m >= 2
    pool(n)     = 1 + min_{1<=x<=n}   [ P[x] * pool(n-x) + W[x] * joint(x, n-x) ]

where ``joint(m, n)`` is the expected remaining tests with a defective set
of ``m`` alongside a pool of ``n``. States are filled by increasing total
``s = m + n`` and, within a total, by increasing ``m``: the negative branch
lands on a smaller total and the positive branch stays on the current total
with a smaller defective set, so every dependency is already final. Ties
break toward the smallest group.

Storage is a flat triangle of rows of constant pool size ``n`` (row ``n``
holds ``m = 1..n_top-n``), which makes the negative branch a contiguous
reversed walk of one row; a scratch array carrying the current total's
states makes the positive branch contiguous too. The hot loops are compiled
with numba.

The optional windowed scan exploits how slowly the minimizing ``x`` moves
between neighboring states on the same total (drift of at most a few
positions): each state searches a window centered on its predecessor's
choice and expands it until the best candidate sits a comfortable margin
inside both scanned edges. It is an opt-in accelerator; the full scan stays
the default-correct path, and the windowed results are validated against it
in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import baselines
from .errors import CapacityError, DomainError, ResourceBudgetError, StateRangeError
from .model import BinomialState, DefectiveState, PowerKernel, Prevalence, cached_kernel

__all__ = ["R1Table", "build_r1", "value_r1", "DEFAULT_MEMORY_BUDGET"]

DEFAULT_MEMORY_BUDGET = 2 << 30  # bytes

# Windowed-scan tuning: initial half-width of the search window and the
# required interior margin between the running best and a scanned edge.
_WINDOW_HALF = 16
_WINDOW_MARGIN = 8


def _row_offsets(n_top: int) -> np.ndarray:
    """Start index of each constant-pool-size row in the flat triangle."""
    lengths = np.arange(n_top, -1, -1, dtype=np.int64)  # row n holds n_top - n entries
    offsets = np.zeros(n_top + 2, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    return offsets


@njit(cache=True)
def _fill_full(pow_q, one_minus, n_top, pool, pool_choice, joint, joint_choice, offsets):
    diag = np.zeros(n_top + 1, dtype=np.float64)
    for s in range(1, n_top + 1):
        base1 = offsets[s - 1]
        joint[base1] = pool[s - 1]
        joint_choice[base1] = 0
        diag[1] = pool[s - 1]
        for m in range(2, s + 1):
            base = offsets[s - m]
            best = np.inf
            best_x = 1
            for x in range(1, m):
                t = pow_q[x] * one_minus[m - x] * joint[base + m - x - 1] + one_minus[x] * diag[x]
                if t < best:
                    best = t
                    best_x = x
            value = 1.0 + best / one_minus[m]
            joint[base + m - 1] = value
            joint_choice[base + m - 1] = best_x
            diag[m] = value
        best = np.inf
        best_x = 1
        for x in range(1, s + 1):
            t = pow_q[x] * pool[s - x] + one_minus[x] * diag[x]
            if t < best:
                best = t
                best_x = x
        pool[s] = 1.0 + best
        pool_choice[s] = best_x


@njit(cache=True)
def _fill_windowed(pow_q, one_minus, n_top, pool, pool_choice, joint, joint_choice, offsets,
                   half, margin):
    diag = np.zeros(n_top + 1, dtype=np.float64)
    for s in range(1, n_top + 1):
        base1 = offsets[s - 1]
        joint[base1] = pool[s - 1]
        joint_choice[base1] = 0
        diag[1] = pool[s - 1]
        center = 1
        for m in range(2, s + 1):
            base = offsets[s - m]
            top = m - 1
            if top <= 2 * half + 1:
                lo = 1
                hi = top
            else:
                c = center if center <= top else top
                lo = c - half if c - half > 1 else 1
                hi = c + half if c + half < top else top
            best = np.inf
            best_x = lo
            for x in range(lo, hi + 1):
                t = pow_q[x] * one_minus[m - x] * joint[base + m - x - 1] + one_minus[x] * diag[x]
                if t < best:
                    best = t
                    best_x = x
            # grow the window until the best sits `margin` inside both
            # scanned edges (or the edge is the domain boundary)
            while True:
                grew = False
                if lo > 1 and best_x - lo < margin:
                    new_lo = lo - (hi - lo + 1)
                    if new_lo < 1:
                        new_lo = 1
                    for x in range(new_lo, lo):
                        t = pow_q[x] * one_minus[m - x] * joint[base + m - x - 1] + one_minus[x] * diag[x]
                        if t < best or (t == best and x < best_x):
                            best = t
                            best_x = x
                    lo = new_lo
                    grew = True
                if hi < top and hi - best_x < margin:
                    new_hi = hi + (hi - lo + 1)
                    if new_hi > top:
                        new_hi = top
                    for x in range(hi + 1, new_hi + 1):
                        t = pow_q[x] * one_minus[m - x] * joint[base + m - x - 1] + one_minus[x] * diag[x]
                        if t < best:
                            best = t
                            best_x = x
                    hi = new_hi
                    grew = True
                if not grew:
                    break
            value = 1.0 + best / one_minus[m]
            joint[base + m - 1] = value
            joint_choice[base + m - 1] = best_x
            diag[m] = value
            center = best_x
        best = np.inf
        best_x = 1
        for x in range(1, s + 1):
            t = pow_q[x] * pool[s - x] + one_minus[x] * diag[x]
            if t < best:
                best = t
                best_x = x
        pool[s] = 1.0 + best
        pool_choice[s] = best_x


@dataclass(frozen=True)
class R1Table:
    """Finished value and choice arrays for the optimal nested procedure.

    ``joint_expected``/``joint_choice`` are flat triangles addressed through
    :meth:`joint_index`; ``row_offsets[n]`` is the start of the row that
    holds states with pool size ``n``. All arrays are read-only.
    """

    prevalence: Prevalence
    n_top: int
    windowed: bool
    pool_expected: np.ndarray   # float64, length n_top + 1
    pool_choice: np.ndarray     # uint32, length n_top + 1
    joint_expected: np.ndarray  # float64, length n_top * (n_top + 1) / 2
    joint_choice: np.ndarray    # uint32, same length
    row_offsets: np.ndarray     # int64, length n_top + 2

    def _check_pool(self, n: int) -> None:
        if not 0 <= n <= self.n_top:
            raise StateRangeError(f"pool size {n} outside table range 0..{self.n_top}")

    def joint_index(self, m: int, n: int) -> int:
        """Flat index of the state (defective set m, pool n)."""
        if m < 1 or n < 0 or m + n > self.n_top:
            raise StateRangeError(
                f"state (m={m}, n={n}) outside table range (need m >= 1, n >= 0, m+n <= {self.n_top})"
            )
        return int(self.row_offsets[n]) + m - 1

    def expected_tests(self, n: int) -> float:
        """Expected tests to classify a binomial pool of ``n`` units."""
        self._check_pool(n)
        return float(self.pool_expected[n])

    def first_test_size(self, n: int) -> int:
        """Group size tested first in a binomial pool of ``n`` units."""
        self._check_pool(n)
        return int(self.pool_choice[n])

    def joint_value(self, m: int, n: int) -> float:
        """Expected remaining tests for a defective set of ``m`` plus pool of ``n``."""
        return float(self.joint_expected[self.joint_index(m, n)])

    def joint_test_size(self, m: int, n: int) -> int:
        """Subtest size chosen at the state (m, n); 0 for the free m = 1 case."""
        return int(self.joint_choice[self.joint_index(m, n)])

    def value(self, state: BinomialState | DefectiveState) -> float:
        """Expected remaining tests for a binomial or defective state."""
        if isinstance(state, BinomialState):
            return self.expected_tests(state.n)
        return self.joint_value(state.m, state.n)

    def recompute_pool_value(self, n: int) -> float:
        """Re-evaluate the pool recursion at the stored choice, mirroring the
        builder's arithmetic exactly (bitwise)."""
        self._check_pool(n)
        if n == 0:
            return 0.0
        kernel = _kernel_for(self.prevalence, self.n_top)
        p = kernel.pow_array
        w = kernel.one_minus_array
        x = int(self.pool_choice[n])
        t = p[x] * self.pool_expected[n - x] + w[x] * self.joint_expected[self.joint_index(x, n - x)]
        return 1.0 + float(t)

    def recompute_joint_value(self, m: int, n: int) -> float:
        """Re-evaluate the joint recursion at the stored choice, mirroring the
        builder's arithmetic exactly (bitwise)."""
        if m == 1:
            return float(self.pool_expected[n])
        kernel = _kernel_for(self.prevalence, self.n_top)
        p = kernel.pow_array
        w = kernel.one_minus_array
        x = int(self.joint_choice[self.joint_index(m, n)])
        neg = self.joint_expected[self.joint_index(m - x, n)]
        pos = self.joint_expected[self.joint_index(x, m - x + n)]
        t = p[x] * w[m - x] * neg + w[x] * pos
        return 1.0 + float(t / w[m])

    @property
    def nbytes(self) -> int:
        """Bytes held by the value and choice planes."""
        return (
            self.pool_expected.nbytes
            + self.pool_choice.nbytes
            + self.joint_expected.nbytes
            + self.joint_choice.nbytes
        )


def _kernel_for(prevalence: Prevalence, n_top: int) -> PowerKernel:
    return cached_kernel(prevalence, max(n_top, baselines.n_max(prevalence)))


def _plane_bytes(n_top: int) -> tuple[int, int]:
    triangle = n_top * (n_top + 1) // 2
    total = triangle * (8 + 4) + (n_top + 1) * (8 + 4 + 8)  # planes + scratch diagonal
    return triangle, total


def build_r1(
    prevalence: Prevalence,
    n_top: int,
    windowed: bool = False,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    kernel: PowerKernel | None = None,
) -> R1Table:
    """Fill the optimal-nested tables for every state with total <= n_top.

    The triangular planes occupy roughly ``12 * n_top^2 / 2`` bytes; builds
    whose footprint would exceed ``memory_budget`` are rejected up front.
    ``windowed=True`` switches the joint-state minimizations to the expanding
    window scan (the pool-level scan is quadratic overall and stays full).
    """
    if n_top < 0:
        raise DomainError(f"n_top must be >= 0, got {n_top}")
    triangle, footprint = _plane_bytes(n_top)
    if footprint > memory_budget:
        raise ResourceBudgetError(
            f"n_top={n_top} needs a triangular plane of {triangle} states "
            f"(~{footprint / 2**20:.0f} MiB); budget is {memory_budget / 2**20:.0f} MiB"
        )
    if kernel is None:
        kernel = _kernel_for(prevalence, n_top)
    elif kernel.capacity < n_top:
        raise CapacityError(f"n_top {n_top} exceeds kernel capacity {kernel.capacity}")

    pool = np.zeros(n_top + 1)
    pool_choice = np.zeros(n_top + 1, dtype=np.uint32)
    joint = np.zeros(triangle)
    joint_choice = np.zeros(triangle, dtype=np.uint32)
    offsets = _row_offsets(n_top)

    if windowed:
        _fill_windowed(
            kernel.pow_array, kernel.one_minus_array, n_top,
            pool, pool_choice, joint, joint_choice, offsets,
            _WINDOW_HALF, _WINDOW_MARGIN,
        )
    else:
        _fill_full(
            kernel.pow_array, kernel.one_minus_array, n_top,
            pool, pool_choice, joint, joint_choice, offsets,
        )

    for arr in (pool, pool_choice, joint, joint_choice, offsets):
        arr.setflags(write=False)
    return R1Table(
        prevalence=prevalence,
        n_top=n_top,
        windowed=windowed,
        pool_expected=pool,
        pool_choice=pool_choice,
        joint_expected=joint,
        joint_choice=joint_choice,
        row_offsets=offsets,
    )


def value_r1(table: R1Table, state: BinomialState | DefectiveState) -> float:
    """Expected remaining tests for ``state`` under the optimal nested policy."""
    return table.value(state)
