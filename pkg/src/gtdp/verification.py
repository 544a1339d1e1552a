"""Reproduction suite: every published value and behavioral claim as a
runnable, individually reported check.

Each claim computes a value, compares it against its reference (published
figure, exact integer, or internal cross-check), and reports the delta,
tolerance, elapsed time, and any stated runtime budget. Claims never raise:
a failure or internal error is reported in the result so one broken claim
cannot mask the rest. The expensive optimal-nested build at the flagship
instance (q=0.9999, n=6765) is shared across the claims that need it and
marked ``slow`` so callers can skip that family.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, oracle
from .engine_r1 import build_r1
from .engine_r3 import build_r3
from .errors import DomainError
from .labels import compress_labels
from .model import Prevalence, make_prevalence
from .simulator import policy_trace, simulate
from .store import TableProvider, load_table, save_table
from .errors import StoreError

__all__ = ["ClaimResult", "claim_names", "run_claims", "FLAGSHIP_Q"]

FLAGSHIP_Q = 0.9999

# Published reference figures for the flagship prevalence q = 0.9999.
EXPECTED_R3_6765 = 12.94809
EXPECTED_R1_6765 = 10.14778
EXPECTED_R3_10000 = 19.20284
EXPECTED_R3_3235 = 6.34621
EXPECTED_SPLIT_SUM = 19.2943
EXPECTED_SPLIT_PENALTY = 0.09146
EXPECTED_REMIX_GAIN = 2.80031
EXPECTED_NMAX = 92099
FIRST_TEST_ALL_SIZES = (6765, 7000, 8000, 9000, 10000, 10500, 10778)


@dataclass(frozen=True)
class ClaimResult:
    """Outcome of one reproduction claim."""

    name: str
    description: str
    computed: float
    expected: float | None
    delta: float | None
    tolerance: float | None
    passed: bool
    elapsed_s: float
    budget_s: float | None = None
    notes: str = ""


class _Context:
    """Shared lazily built tables for one verification run."""

    def __init__(self, q: float, cache_dir: str | Path | None):
        self.prevalence: Prevalence = make_prevalence(q)
        self.cache_dir = cache_dir
        self.provider = TableProvider(cache_dir)
        self._cache: dict[str, object] = {}

    def r3(self):
        if "r3" not in self._cache:
            self._cache["r3"] = self.provider.get("r3", self.prevalence, 10779)
        return self._cache["r3"]

    def r1_full(self):
        if "r1_full" not in self._cache:
            self._cache["r1_full"] = self.provider.get("r1", self.prevalence, 6765)
        return self._cache["r1_full"]

    def r1_windowed(self):
        if "r1_win" not in self._cache:
            self._cache["r1_win"] = self.provider.get(
                "r1", self.prevalence, 6765, windowed=True
            )
        return self._cache["r1_win"]

    def cli_args(self) -> list[str]:
        return ["--cache-dir", str(self.cache_dir)] if self.cache_dir else []


def _abs_claim(name, description, computed, expected, tolerance, budget=None, notes=""):
    delta = abs(computed - expected)
    return dict(
        name=name, description=description, computed=float(computed),
        expected=float(expected), delta=float(delta), tolerance=float(tolerance),
        passed=bool(delta <= tolerance), budget_s=budget, notes=notes,
    )


def _claim_r3_expected_6765(ctx: _Context):
    table, from_cache, _ = ctx.r3()
    return _abs_claim(
        "r3-expected-6765",
        "restricted nested expected tests at n=6765",
        table.expected_tests(6765), EXPECTED_R3_6765, 1e-5, budget=5.0,
        notes="from cache" if from_cache else "built",
    )


def _claim_r3_expected_10000(ctx: _Context):
    table, _, _ = ctx.r3()
    return _abs_claim(
        "r3-expected-10000",
        "restricted nested expected tests at n=10000 (single pool)",
        table.expected_tests(10000), EXPECTED_R3_10000, 1e-5,
    )


def _claim_r3_expected_3235(ctx: _Context):
    table, _, _ = ctx.r3()
    return _abs_claim(
        "r3-expected-3235",
        "restricted nested expected tests at n=3235",
        table.expected_tests(3235), EXPECTED_R3_3235, 1e-5,
    )


def _claim_r3_split_sum(ctx: _Context):
    table, _, _ = ctx.r3()
    return _abs_claim(
        "r3-split-sum",
        "cost of splitting n=10000 into pools of 6765 and 3235",
        table.split_cost([6765, 3235]), EXPECTED_SPLIT_SUM, 2e-5,
    )


def _claim_r3_split_penalty(ctx: _Context):
    table, _, _ = ctx.r3()
    penalty = table.split_cost([6765, 3235]) - table.expected_tests(10000)
    return _abs_claim(
        "r3-split-penalty",
        "extra expected tests paid by the 6765+3235 split over one pool of 10000",
        penalty, EXPECTED_SPLIT_PENALTY, 2e-4,
    )


def _claim_r3_first_test_all(ctx: _Context):
    table, _, _ = ctx.r3()
    matches = sum(1 for n in FIRST_TEST_ALL_SIZES if table.first_test_size(n) == n)
    boundary = table.first_test_size(10779)
    notes = f"first_test(10779)={boundary} (observational)"
    result = _abs_claim(
        "r3-first-test-all",
        "whole-pool first test is optimal at all checked sizes up to 10778",
        matches, len(FIRST_TEST_ALL_SIZES), 0, notes=notes,
    )
    result["passed"] = result["passed"] and 1 <= boundary <= 10779
    return result


def _claim_nmax_flagship(ctx: _Context):
    return _abs_claim(
        "nmax-9999",
        "largest group size ever worth testing first at q=0.9999",
        baselines.n_max(make_prevalence(0.9999)), EXPECTED_NMAX, 0,
    )


def _claim_nmax_half(ctx: _Context):
    return _abs_claim(
        "nmax-half",
        "largest useful group size collapses to 1 at q=0.5",
        baselines.n_max(make_prevalence(0.5)), 1, 0,
    )


def _claim_r1_expected_6765(ctx: _Context):
    table, from_cache, seconds = ctx.r1_full()
    return _abs_claim(
        "r1-expected-6765",
        "optimal nested expected tests at n=6765 (full scan)",
        table.expected_tests(6765), EXPECTED_R1_6765, 1e-5, budget=900.0,
        notes=("from cache" if from_cache else f"built in {seconds:.1f}s"),
    )


def _claim_r1_windowed_small(ctx: _Context):
    full = build_r1(ctx.prevalence, 400)
    windowed = build_r1(ctx.prevalence, 400, windowed=True)
    dev = max(
        float(np.max(np.abs(full.pool_expected - windowed.pool_expected))),
        float(np.max(np.abs(full.joint_expected - windowed.joint_expected))),
    )
    return _abs_claim(
        "r1-windowed-small",
        "windowed scan matches the full scan on every state with total <= 400",
        dev, 0.0, 1e-9,
    )


def _claim_r1_windowed_6765(ctx: _Context):
    full, _, _ = ctx.r1_full()
    windowed, _, _ = ctx.r1_windowed()
    return _abs_claim(
        "r1-windowed-6765",
        "windowed scan reproduces the full-scan value at n=6765",
        windowed.expected_tests(6765), full.expected_tests(6765), 1e-9,
    )


def _claim_r1_remix_gain(ctx: _Context):
    r3_table, _, _ = ctx.r3()
    r1_table, _, _ = ctx.r1_full()
    gain = r3_table.expected_tests(6765) - r1_table.expected_tests(6765)
    return _abs_claim(
        "r1-remix-gain-6765",
        "expected tests saved by remixing remainder units into the pool at n=6765",
        gain, EXPECTED_REMIX_GAIN, 2e-5,
    )


def _claim_r1_info_floor(ctx: _Context):
    r1_table, _, _ = ctx.r1_full()
    bound = baselines.info_bound(ctx.prevalence, 6765)
    value = r1_table.expected_tests(6765)
    passed = (9.9 < bound < 10.0) and value >= bound
    return dict(
        name="r1-info-floor-6765",
        description="entropy lower bound sits just below the optimal nested value at n=6765",
        computed=bound, expected=None, delta=None, tolerance=None, passed=passed,
        notes=f"H={value:.5f} >= bound={bound:.5f}",
    )


_ORACLE_GRID_Q = (0.5, 0.9, 0.99)


def _claim_oracle_r3(ctx: _Context):
    dev = 0.0
    for qv in _ORACLE_GRID_Q:
        prev = make_prevalence(qv)
        table = build_r3(prev, 6)
        for n in range(7):
            dev = max(dev, abs(oracle.exhaustive_min_r3(prev, n) - table.expected_tests(n)))
    return _abs_claim(
        "oracle-r3-grid",
        "exact enumeration equals the restricted DP for n <= 6 on the q grid",
        dev, 0.0, 1e-12, budget=60.0,
    )


def _claim_oracle_r1(ctx: _Context):
    dev = 0.0
    for qv in _ORACLE_GRID_Q:
        prev = make_prevalence(qv)
        table = build_r1(prev, 6)
        for n in range(7):
            dev = max(dev, abs(oracle.exhaustive_min_r1(prev, n) - table.expected_tests(n)))
    return _abs_claim(
        "oracle-r1-grid",
        "exact enumeration equals the optimal nested DP for n <= 6 on the q grid",
        dev, 0.0, 1e-12, budget=60.0,
    )


def _claim_oracle_labeled(ctx: _Context):
    dev = 0.0
    for qv in _ORACLE_GRID_Q:
        prev = make_prevalence(qv)
        r1_table = build_r1(prev, 4)
        r3_table = build_r3(prev, 4)
        for n in range(5):
            dev = max(dev, abs(oracle.labeled_min_r1(prev, n) - r1_table.expected_tests(n)))
            dev = max(dev, abs(oracle.labeled_min_r3(prev, n) - r3_table.expected_tests(n)))
    return _abs_claim(
        "oracle-labeled",
        "no labeled nested policy beats the size-based optimum for n <= 4",
        dev, 0.0, 1e-12, budget=60.0,
    )


def _claim_bounds_grid(ctx: _Context):
    violations = 0
    for qv in (0.5, 0.9, 0.99, 0.999):
        prev = make_prevalence(qv)
        r3_table = build_r3(prev, 200)
        r1_table = build_r1(prev, 200)
        for n in range(201):
            floor = baselines.info_bound(prev, n)
            h = r1_table.expected_tests(n)
            e = r3_table.expected_tests(n)
            if not (floor <= h + 1e-9 and h <= e + 1e-12 and e <= n + 1e-9):
                violations += 1
    return _abs_claim(
        "bounds-grid",
        "entropy bound <= optimal nested <= restricted <= individual testing, q grid x n <= 200",
        violations, 0, 0,
    )


def _claim_mc_r3(ctx: _Context):
    table, _, _ = ctx.r3()
    est = simulate(table, 6765, trials=200_000, seed=20260826)
    result = _abs_claim(
        "mc-r3-6765",
        "Monte Carlo mean at n=6765 agrees with the published restricted value",
        est.mean, EXPECTED_R3_6765, 4 * est.stderr, budget=120.0,
        notes=f"stderr={est.stderr:.5f}, trials={est.trials}",
    )
    return result


def _claim_mc_r1(ctx: _Context):
    prev = make_prevalence(0.9)
    table = build_r1(prev, 50)
    target = table.expected_tests(50)
    est = simulate(table, 50, trials=500_000, seed=20260827)
    return _abs_claim(
        "mc-r1-50",
        "Monte Carlo mean at q=0.9, n=50 agrees with the optimal nested DP value",
        est.mean, target, 4 * est.stderr, budget=120.0,
        notes=f"stderr={est.stderr:.5f}, trials={est.trials}",
    )


def _claim_mc_determinism(ctx: _Context):
    prev = make_prevalence(0.9)
    table = build_r3(prev, 40)
    one = simulate(table, 40, trials=4000, seed=7, workers=1)
    four = simulate(table, 40, trials=4000, seed=7, workers=4)
    same = one.mean == four.mean and one.stderr == four.stderr
    return _abs_claim(
        "mc-determinism",
        "identical seed gives bitwise-identical estimates for 1 and 4 workers",
        0.0 if same else 1.0, 0.0, 0,
        notes=f"mean={one.mean!r}",
    )


def _claim_store_roundtrip(ctx: _Context, tmp_dir: Path):
    table, _, _ = ctx.r3()
    path = tmp_dir / "roundtrip.gtdp"
    save_table(table, path)
    loaded = load_table(path, expected_q=ctx.prevalence.q, expected_procedure="r3")
    bitwise = (
        loaded.pool_expected.tobytes() == table.pool_expected.tobytes()
        and loaded.defective_expected.tobytes() == table.defective_expected.tobytes()
        and loaded.pool_choice.tobytes() == table.pool_choice.tobytes()
        and loaded.defective_choice.tobytes() == table.defective_choice.tobytes()
    )
    small = build_r3(ctx.prevalence, 50)
    small_path = tmp_dir / "fuzz.gtdp"
    save_table(small, small_path)
    blob = bytearray(small_path.read_bytes())
    rng = np.random.default_rng(1)
    rejected = 0
    bad = tmp_dir / "fuzz-bad.gtdp"
    for _ in range(1000):
        pos = int(rng.integers(len(blob)))
        old = blob[pos]
        blob[pos] ^= int(rng.integers(1, 256))
        bad.write_bytes(bytes(blob))
        try:
            load_table(bad)
        except StoreError:
            rejected += 1
        blob[pos] = old
    return _abs_claim(
        "store-roundtrip",
        "save/load round trip is bitwise identical; 1000 single-byte corruptions rejected",
        rejected if bitwise else -1, 1000, 0,
    )


def _claim_store_serves(ctx: _Context, tmp_dir: Path):
    table, _, _ = ctx.r3()
    path = tmp_dir / "serves.gtdp"
    save_table(table, path)
    loaded = load_table(path)
    dev = max(
        abs(loaded.expected_tests(n) - table.expected_tests(n))
        for n in (6765, 3235, 10000)
    )
    return _abs_claim(
        "store-serves-correction",
        "a cached restricted table reproduces the split-correction values unchanged",
        dev, 0.0, 0,
    )


def _run_session(ctx: _Context, procedure: str, q: float, n: int, outcomes: str):
    from click.testing import CliRunner
    from .cli import main

    args = ctx.cli_args() + [
        "session", "--proc", procedure, "--q", repr(q), "--n", str(n),
    ]
    return CliRunner().invoke(main, args, input=outcomes, catch_exceptions=False)


def _claim_session_one_test(ctx: _Context):
    result = _run_session(ctx, "r3", ctx.prevalence.q, 10000, "-\n")
    match = re.search(r"session complete: .* in (\d+) test", result.output)
    tests = int(match.group(1)) if match else -1
    return _abs_claim(
        "session-one-test",
        "an all-negative interactive session at n=10000 finishes after one whole-pool test",
        tests, 1, 0,
    )


def _claim_session_replay(ctx: _Context):
    rng = np.random.default_rng(42)
    prev = make_prevalence(0.9)
    tables = {"r3": build_r3(prev, 30), "r1": build_r1(prev, 30)}
    matched = 0
    total = 20
    first_mismatch = ""
    for i in range(total):
        procedure = "r3" if i % 2 == 0 else "r1"
        n = int(rng.integers(1, 31))
        truth = rng.random(n) < 0.2
        trace = policy_trace(tables[procedure], truth)
        outcomes = "".join("+\n" if positive else "-\n" for _, positive in trace)
        result = _run_session(ctx, procedure, 0.9, n, outcomes)
        emitted = re.findall(r"test (\d+) unit\(s\): (.+)", result.output)
        expected = [(str(len(g)), compress_labels(g)) for g, _ in trace]
        final = re.search(r"in (\d+) test", result.output)
        if emitted == expected and final and int(final.group(1)) == len(trace):
            matched += 1
        elif not first_mismatch:
            first_mismatch = f"trial {i}: proc={procedure} n={n}"
    return _abs_claim(
        "session-replay-random",
        "interactive sessions replay the simulator trace step-for-step on random truths",
        matched, total, 0, notes=first_mismatch,
    )


_REGISTRY: list[tuple[str, bool, object]] = [
    ("r3-expected-6765", False, _claim_r3_expected_6765),
    ("r3-expected-10000", False, _claim_r3_expected_10000),
    ("r3-expected-3235", False, _claim_r3_expected_3235),
    ("r3-split-sum", False, _claim_r3_split_sum),
    ("r3-split-penalty", False, _claim_r3_split_penalty),
    ("r3-first-test-all", False, _claim_r3_first_test_all),
    ("nmax-9999", False, _claim_nmax_flagship),
    ("nmax-half", False, _claim_nmax_half),
    ("r1-expected-6765", True, _claim_r1_expected_6765),
    ("r1-windowed-small", False, _claim_r1_windowed_small),
    ("r1-windowed-6765", True, _claim_r1_windowed_6765),
    ("r1-remix-gain-6765", True, _claim_r1_remix_gain),
    ("r1-info-floor-6765", True, _claim_r1_info_floor),
    ("oracle-r3-grid", False, _claim_oracle_r3),
    ("oracle-r1-grid", False, _claim_oracle_r1),
    ("oracle-labeled", False, _claim_oracle_labeled),
    ("bounds-grid", False, _claim_bounds_grid),
    ("mc-r3-6765", True, _claim_mc_r3),
    ("mc-r1-50", True, _claim_mc_r1),
    ("mc-determinism", False, _claim_mc_determinism),
    ("store-roundtrip", False, _claim_store_roundtrip),
    ("store-serves-correction", False, _claim_store_serves),
    ("session-one-test", False, _claim_session_one_test),
    ("session-replay-random", False, _claim_session_replay),
]

_NEEDS_TMP = {"store-roundtrip", "store-serves-correction"}


def claim_names(include_slow: bool = True) -> list[str]:
    """Registered claim names in execution order."""
    return [name for name, slow, _ in _REGISTRY if include_slow or not slow]


def run_claims(
    only: list[str] | None = None,
    include_slow: bool = True,
    q: float = FLAGSHIP_Q,
    cache_dir: str | Path | None = None,
) -> list[ClaimResult]:
    """Execute the reproduction suite and return one result per claim.

    ``only`` restricts to the named claims (order preserved, unknown names
    rejected); ``include_slow=False`` skips the claims that need the large
    optimal-nested build or six-figure Monte Carlo runs. ``q`` overrides the
    flagship prevalence — useful as a negative control, since the published
    figures then fail individually rather than crashing the run.
    """
    import tempfile

    known = {name for name, _, _ in _REGISTRY}
    if only is not None:
        unknown = [name for name in only if name not in known]
        if unknown:
            raise DomainError(f"unknown claim name(s): {', '.join(unknown)}")
        wanted = set(only)
    else:
        wanted = None
    ctx = _Context(q, cache_dir)
    results: list[ClaimResult] = []
    with tempfile.TemporaryDirectory(prefix="gtdp-verify-") as tmp:
        tmp_dir = Path(tmp)
        for name, slow, fn in _REGISTRY:
            if wanted is not None and name not in wanted:
                continue
            if wanted is None and slow and not include_slow:
                continue
            start = time.perf_counter()
            try:
                if name in _NEEDS_TMP:
                    payload = fn(ctx, tmp_dir)
                else:
                    payload = fn(ctx)
            except Exception as exc:  # claim errors are results, not crashes
                payload = dict(
                    name=name, description="(claim raised)", computed=math.nan,
                    expected=None, delta=None, tolerance=None, passed=False,
                    notes=f"error: {exc!r}",
                )
            elapsed = time.perf_counter() - start
            payload.setdefault("budget_s", None)
            payload.setdefault("notes", "")
            results.append(ClaimResult(elapsed_s=elapsed, **payload))
    return results
