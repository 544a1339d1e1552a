"""Human-readable unit labels.

Internal unit labels are 0-based integers; everything user-facing shows them
as ``u1``-style 1-based names, with consecutive runs collapsed (``u1-u6765``)
so whole-pool recommendations stay one short token.
"""

from __future__ import annotations

from collections.abc import Iterable

import numpy as np

__all__ = ["compress_labels", "unit_name"]

_MAX_RUNS = 12  # display cap for pathological scatter


def unit_name(label: int) -> str:
    """1-based display name of a 0-based unit label."""
    return f"u{label + 1}"


def compress_labels(labels: Iterable[int] | np.ndarray) -> str:
    """Render sorted labels as comma-joined runs: ``u1-u3, u5, u9-u12``.

    Empty input renders as ``(none)``. Output is capped at a dozen runs;
    the tail is summarized, since recommendation groups and pools are
    contiguous in practice and never hit the cap.
    """
    arr = np.asarray(sorted(int(v) for v in labels), dtype=np.int64)
    if arr.size == 0:
        return "(none)"
    breaks = np.flatnonzero(np.diff(arr) != 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [arr.size - 1]))
    runs = []
    for s, e in zip(starts, ends):
        if len(runs) == _MAX_RUNS:
            remaining = int(arr.size - int(np.sum(ends[: _MAX_RUNS] - starts[: _MAX_RUNS] + 1)))
            runs.append(f"... (+{remaining} more)")
            break
        a, b = int(arr[s]), int(arr[e])
        runs.append(unit_name(a) if a == b else f"{unit_name(a)}-{unit_name(b)}")
    return ", ".join(runs)
