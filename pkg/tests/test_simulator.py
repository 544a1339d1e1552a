"""Tests for policy execution and the Monte Carlo simulator."""

from __future__ import annotations

import numpy as np
import pytest

from gtdp import (
    ClassificationError,
    DomainError,
    Prevalence,
    ProtocolError,
    StateRangeError,
    apply_outcome,
    build_r1,
    build_r3,
    next_group,
    simulate,
)
from gtdp.simulator import (
    ExecutionState,
    PolicyExecutor,
    fresh_state,
    policy_trace,
)


@pytest.fixture(scope="module")
def r3_small():
    return build_r3(Prevalence(0.9), 200)


@pytest.fixture(scope="module")
def r1_small():
    return build_r1(Prevalence(0.9), 200)


class TestProbeMode:
    def test_all_good_single_test(self, r3_flagship):
        table, _ = r3_flagship
        truth = np.zeros(10000, dtype=bool)
        estimate = simulate(table, 10000, trials=999, seed=0, probe_truth=truth)
        assert estimate.mean == 1.0
        assert estimate.stderr == 0.0
        assert estimate.trials == 1

    @pytest.mark.parametrize("position", [0, 17, 199])
    def test_single_defective(self, r3_small, r1_small, position):
        truth = np.zeros(200, dtype=bool)
        truth[position] = True
        for table in (r3_small, r1_small):
            executor = PolicyExecutor(table, truth, check_invariants=True)
            tests = executor.run()
            assert tests >= 2
            assert executor.state.classified_defective.tolist() == [position]

    def test_trace_is_replayable(self, r1_small, rng):
        truth = rng.random(60) < 0.1
        trace = policy_trace(r1_small, truth)
        state = fresh_state(60)
        for group, positive in trace:
            expected = next_group(state, r1_small)
            assert np.array_equal(expected, group)
            assert positive == bool(truth[group].any())
            apply_outcome(state, group, positive, "r1")
        assert next_group(state, r1_small) is None
        assert state.complete

    @pytest.mark.parametrize("procedure", ["r1", "r3"])
    def test_nested_rule(self, r3_small, r1_small, procedure, rng):
        # After a positive test, the next group is a proper subset of the
        # defective set; pool tests only happen with no defective set live.
        table = r1_small if procedure == "r1" else r3_small
        for _ in range(10):
            truth = rng.random(50) < 0.2
            state = fresh_state(50)
            while (group := next_group(state, table)) is not None:
                m = len(state.defective_set)
                if m >= 2:
                    assert len(group) <= m - 1
                    assert set(group.tolist()) < set(state.defective_set.tolist())
                else:
                    assert m == 0
                apply_outcome(state, group, bool(truth[group].any()), procedure)
            state.assert_partition(50)


class TestTransitions:
    def test_singleton_collapse(self, r3_small):
        state = fresh_state(2)
        group = next_group(state, r3_small)
        # q=0.9 pool of 2: the first test pools both units
        assert group.tolist() == [0, 1]
        apply_outcome(state, group, True, "r3")
        assert state.defective_set.tolist() == [0, 1]
        sub = next_group(state, r3_small)
        assert sub.tolist() == [0]
        apply_outcome(state, sub, False, "r3")
        # the remaining suspect is classified defective without another test
        follow_up = next_group(state, r3_small)
        assert follow_up is None
        assert state.classified_defective.tolist() == [1]
        assert state.classified_good.tolist() == [0]
        assert state.tests_used == 2

    def test_pending_is_lifo(self, r3_small):
        state = ExecutionState(
            pool=np.array([], dtype=np.int64),
            defective_set=np.array([0, 1, 2, 3], dtype=np.int64),
        )
        apply_outcome(state, np.array([0, 1], dtype=np.int64), True, "r3")
        assert [sub.pool.tolist() for sub in state.pending] == [[2, 3]]
        apply_outcome(state, np.array([0], dtype=np.int64), False, "r3")
        # defective set collapses to {1}; the pending pool [2, 3] activates
        group = next_group(state, r3_small)
        assert state.classified_defective.tolist() == [1]
        assert group.tolist() == [2, 3]

    def test_remix_returns_remainder_to_pool(self, r1_small):
        state = ExecutionState(
            pool=np.array([4, 5], dtype=np.int64),
            defective_set=np.array([0, 1, 2, 3], dtype=np.int64),
        )
        apply_outcome(state, np.array([0, 1], dtype=np.int64), True, "r1")
        assert state.defective_set.tolist() == [0, 1]
        assert state.pool.tolist() == [2, 3, 4, 5]
        assert not state.pending

    def test_protocol_errors(self, r3_small):
        state = fresh_state(5)
        with pytest.raises(ProtocolError, match="empty group"):
            apply_outcome(state, np.array([], dtype=np.int64), True, "r3")
        with pytest.raises(ProtocolError, match="stale or mismatched"):
            apply_outcome(state, np.array([1, 2], dtype=np.int64), True, "r3")
        live = ExecutionState(
            pool=np.array([3, 4], dtype=np.int64),
            defective_set=np.array([0, 1], dtype=np.int64),
        )
        with pytest.raises(ProtocolError, match="defective set is live"):
            apply_outcome(live, np.array([3], dtype=np.int64), False, "r3")
        with pytest.raises(DomainError):
            apply_outcome(state, np.array([0], dtype=np.int64), True, "r2")

    def test_partition_check(self):
        state = fresh_state(4)
        state.pool = state.pool[1:]  # drop a label
        with pytest.raises(ProtocolError, match="partition"):
            state.assert_partition(4)

    def test_fresh_state_validation(self):
        with pytest.raises(DomainError):
            fresh_state(-1)
        assert fresh_state(0).complete


class TestSimulate:
    def test_matches_table_within_stderr(self, r1_small, r3_small):
        for table in (r1_small, r3_small):
            expected = table.expected_tests(120)
            estimate = simulate(table, 120, trials=20_000, seed=42)
            assert estimate.stderr > 0.0
            assert abs(estimate.mean - expected) <= 5.0 * estimate.stderr

    def test_deterministic_across_workers(self, r3_small, r1_small):
        for table in (r3_small, r1_small):
            runs = [
                simulate(table, 150, trials=4001, seed=5, workers=w) for w in (1, 2, 5)
            ]
            assert len({(r.mean, r.stderr) for r in runs}) == 1

    def test_seed_changes_draws(self, r3_small):
        a = simulate(r3_small, 150, trials=2000, seed=1)
        b = simulate(r3_small, 150, trials=2000, seed=2)
        assert a.mean != b.mean

    def test_single_trial_has_no_stderr(self, r3_small):
        estimate = simulate(r3_small, 50, trials=1, seed=9)
        assert estimate.stderr == 0.0
        assert estimate.trials == 1

    def test_executor_agreement(self, r1_small, r3_small):
        for table in (r1_small, r3_small):
            simulate(table, 80, trials=200, seed=3, check_invariants=True)

    def test_validation(self, r3_small):
        with pytest.raises(DomainError):
            simulate(r3_small, 50, trials=0, seed=0)
        with pytest.raises(DomainError):
            simulate(r3_small, 50, trials=10, seed=0, workers=0)
        with pytest.raises(StateRangeError):
            simulate(r3_small, 201, trials=10, seed=0)

    def test_classification_mismatch_raises(self, r3_small, monkeypatch):
        def broken(choice_e, choice_d, defects, n):
            return 1, []

        monkeypatch.setattr("gtdp.simulator._run_trial_r3", broken)
        with pytest.raises(ClassificationError):
            simulate(r3_small, 50, trials=50, seed=12)

    def test_estimate_fields(self, r3_small):
        estimate = simulate(r3_small, 60, trials=64, seed=77, workers=2)
        assert estimate.trials == 64
        assert estimate.seed == 77
        counts_mean = estimate.mean
        assert counts_mean > 1.0
