"""Unit tests for the optimal nested procedure's dynamic program."""

from __future__ import annotations

import numpy as np
import pytest

from gtdp import (
    BinomialState,
    CapacityError,
    DefectiveState,
    DomainError,
    PowerKernel,
    Prevalence,
    ResourceBudgetError,
    StateRangeError,
    build_r1,
    build_r3,
    value_r1,
)

EXPECTED_6765 = 10.14778
EXPECTED_REMIX_GAIN = 2.80031


def mirror_r1(prevalence: Prevalence, n_top: int):
    """Scalar reference implementation of the optimal-nested recurrences.

    Fills states by increasing total and mirrors the production expression
    trees operation for operation, so values and choices must match bitwise.
    Returns (pool values, pool choices, {(m, n): (value, choice)}).
    """
    kernel = PowerKernel(prevalence, n_top)
    P = kernel.pow_array
    W = kernel.one_minus_array
    pool = [0.0] * (n_top + 1)
    pool_choice = [0] * (n_top + 1)
    joint: dict[tuple[int, int], tuple[float, int]] = {}
    for s in range(1, n_top + 1):
        diag = [0.0] * (s + 1)
        joint[(1, s - 1)] = (pool[s - 1], 0)
        diag[1] = pool[s - 1]
        for m in range(2, s + 1):
            n = s - m
            best, best_x = np.inf, 1
            for x in range(1, m):
                t = P[x] * W[m - x] * joint[(m - x, n)][0] + W[x] * diag[x]
                if t < best:
                    best, best_x = t, x
            value = 1.0 + best / W[m]
            joint[(m, n)] = (value, best_x)
            diag[m] = value
        best, best_x = np.inf, 1
        for x in range(1, s + 1):
            t = P[x] * pool[s - x] + W[x] * diag[x]
            if t < best:
                best, best_x = t, x
        pool[s] = 1.0 + best
        pool_choice[s] = best_x
    return pool, pool_choice, joint


class TestFlagshipValues:
    def test_expected_tests(self, r1_full):
        table, _ = r1_full
        assert table.expected_tests(6765) == pytest.approx(EXPECTED_6765, abs=1e-5)

    def test_remix_gain(self, r1_full, r3_flagship):
        r1_table, _ = r1_full
        r3_table, _ = r3_flagship
        gain = r3_table.expected_tests(6765) - r1_table.expected_tests(6765)
        assert gain == pytest.approx(EXPECTED_REMIX_GAIN, abs=2e-5)

    def test_windowed_reproduces_full(self, r1_full, r1_windowed):
        full, _ = r1_full
        windowed, _ = r1_windowed
        assert windowed.windowed and not full.windowed
        drift = np.max(np.abs(full.pool_expected[:401] - windowed.pool_expected[:401]))
        assert drift <= 1e-9
        assert abs(full.expected_tests(6765) - windowed.expected_tests(6765)) <= 1e-9


class TestInvariants:
    def test_terminal_values(self, r1_full):
        table, _ = r1_full
        assert table.expected_tests(0) == 0.0
        assert table.expected_tests(1) == 1.0

    def test_lone_suspect_row_equals_pool(self, r1_full):
        # joint(1, n) = pool(n): a lone suspect unit is identified for free.
        table, _ = r1_full
        for n in range(0, table.n_top, 97):
            assert table.joint_value(1, n) == table.expected_tests(n)
            assert table.joint_test_size(1, n) == 0

    def test_monotone_and_dominated(self, r1_full, r3_flagship):
        r1_table, _ = r1_full
        r3_table, _ = r3_flagship
        h = r1_table.pool_expected
        ns = np.arange(len(h), dtype=np.float64)
        assert np.all(np.diff(h) >= -1e-12)
        assert np.all(h <= ns + 1e-9)
        # one extra unit can always be classified with one extra test
        assert np.all(np.diff(h) <= 1.0 + 1e-12)
        # the optimal procedure never does worse than the restricted one
        e = r3_table.pool_expected[: len(h)]
        assert np.all(h <= e + 1e-12)

    def test_choice_ranges(self, r1_full):
        table, _ = r1_full
        n_top = table.n_top
        ns = np.arange(1, n_top + 1)
        assert np.all(table.pool_choice[1:] >= 1)
        assert np.all(table.pool_choice[1:] <= ns)
        for s in range(2, 300):
            for m in range(2, s + 1):
                x = table.joint_test_size(m, s - m)
                assert 1 <= x <= m - 1

    def test_one_step_consistency(self, r1_full, rng):
        table, _ = r1_full
        for n in range(1, table.n_top + 1, 7):
            assert table.recompute_pool_value(n) == table.pool_expected[n]
        # all small states, plus a random sample of large ones
        for s in range(2, 40):
            for m in range(2, s + 1):
                idx = table.joint_index(m, s - m)
                assert table.recompute_joint_value(m, s - m) == table.joint_expected[idx]
        for _ in range(2000):
            s = int(rng.integers(2, table.n_top + 1))
            m = int(rng.integers(2, s + 1))
            idx = table.joint_index(m, s - m)
            assert table.recompute_joint_value(m, s - m) == table.joint_expected[idx]


class TestSmallExactValues:
    def test_halving_pair(self):
        table = build_r1(Prevalence(0.5), 2)
        assert table.expected_tests(2) == 2.0
        # with no surrounding pool, remixing changes nothing: G(2,0) = D(2) = 5/3
        assert table.joint_value(2, 0) == pytest.approx(5.0 / 3.0, abs=1e-15)

    @pytest.mark.parametrize("q", [0.5, 0.9, 0.99])
    def test_matches_scalar_mirror_bitwise(self, q):
        prevalence = Prevalence(q)
        table = build_r1(prevalence, 48)
        pool, pool_choice, joint = mirror_r1(prevalence, 48)
        for n in range(49):
            assert table.pool_expected[n] == pool[n], f"H mismatch at n={n}, q={q}"
            assert table.pool_choice[n] == pool_choice[n], f"H choice mismatch at n={n}, q={q}"
        for (m, n), (value, choice) in joint.items():
            idx = table.joint_index(m, n)
            assert table.joint_expected[idx] == value, f"G mismatch at (m={m}, n={n}), q={q}"
            if m >= 2:
                assert table.joint_choice[idx] == choice, f"G choice mismatch at (m={m}, n={n}), q={q}"

    @pytest.mark.parametrize("q", [0.9, 0.9999])
    def test_windowed_matches_full_bitwise_small(self, q):
        prevalence = Prevalence(q)
        full = build_r1(prevalence, 240)
        windowed = build_r1(prevalence, 240, windowed=True)
        assert np.array_equal(full.pool_expected, windowed.pool_expected)
        assert np.array_equal(full.pool_choice, windowed.pool_choice)
        assert np.array_equal(full.joint_expected, windowed.joint_expected)
        assert np.array_equal(full.joint_choice, windowed.joint_choice)

    def test_remix_never_hurts(self):
        # G(m, n) <= D(m) + H(n) would need the restricted table; the cheap
        # internal check is monotonicity in the pool size.
        table = build_r1(Prevalence(0.9), 60)
        for n in range(0, 58):
            assert table.joint_value(2, n) <= table.joint_value(2, n + 1) + 1e-12
        r3 = build_r3(Prevalence(0.9), 60)
        for s in range(2, 61):
            for m in range(2, s + 1):
                restricted = r3.defective_tests(m) + r3.expected_tests(s - m)
                assert table.joint_value(m, s - m) <= restricted + 1e-12


class TestAccessors:
    def test_value_dispatch(self, r1_full):
        table, _ = r1_full
        assert value_r1(table, BinomialState(10)) == table.expected_tests(10)
        assert value_r1(table, DefectiveState(3, 5)) == table.joint_value(3, 5)
        assert table.value(BinomialState(0)) == 0.0

    def test_state_range(self, r1_full):
        table, _ = r1_full
        with pytest.raises(StateRangeError):
            table.expected_tests(-1)
        with pytest.raises(StateRangeError):
            table.expected_tests(table.n_top + 1)
        with pytest.raises(StateRangeError):
            table.joint_index(0, 5)
        with pytest.raises(StateRangeError):
            table.joint_index(1, -1)
        with pytest.raises(StateRangeError):
            table.joint_index(2, table.n_top - 1)
        with pytest.raises(StateRangeError):
            value_r1(table, DefectiveState(table.n_top, 1))

    def test_nbytes(self, r1_full):
        table, _ = r1_full
        planes = (
            table.pool_expected.nbytes
            + table.pool_choice.nbytes
            + table.joint_expected.nbytes
            + table.joint_choice.nbytes
        )
        assert table.nbytes >= planes


class TestValidation:
    def test_build_validation(self):
        with pytest.raises(DomainError):
            build_r1(Prevalence(0.9), -1)
        small_kernel = PowerKernel(Prevalence(0.9), 10)
        with pytest.raises(CapacityError):
            build_r1(Prevalence(0.9), 20, kernel=small_kernel)

    def test_memory_budget(self):
        with pytest.raises(ResourceBudgetError) as excinfo:
            build_r1(Prevalence(0.9999), 30_000)
        message = str(excinfo.value)
        assert "states" in message
        assert "MiB" in message

    def test_budget_can_be_raised(self):
        # the same n_top passes the pre-check with a larger budget
        table = build_r1(Prevalence(0.9), 600, memory_budget=64 * 2**20)
        assert table.n_top == 600

    def test_arrays_read_only(self, r1_full):
        table, _ = r1_full
        with pytest.raises(ValueError):
            table.pool_expected[0] = 1.0
        with pytest.raises(ValueError):
            table.joint_expected[0] = 1.0
